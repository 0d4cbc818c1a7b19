//! CSV and text renderings of results.

use std::fmt::Write;

use difftune_core::difftune::TrainOutcome;
use difftune_core::metrics::{EvalReport, SweepResult};
use difftune_core::recovery::RecoveryReport;
use difftune_core::tuner::Iteration;

pub const EVAL_HEADER: &str = "predictor,dataset,n,mape,kendall_tau,seed";

pub fn eval_row(r: &EvalReport) -> String {
    let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
    format!("{},{},{},{},{},{}", r.predictor, r.dataset, r.n, r.mape, r.kendall_tau, seed)
}

pub fn eval_csv<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for r in reports {
        s.push_str(&eval_row(r));
        s.push('\n');
    }
    s
}

/// Human-readable summary; tau-b is added when `verbose`.
pub fn eval_text(r: &EvalReport, verbose: bool) -> String {
    let mut s = format!(
        "{} on {} ({} blocks): MAPE {:.2}%, Kendall tau {:.4}",
        r.predictor,
        r.dataset,
        r.n,
        100.0 * r.mape,
        r.kendall_tau
    );
    if verbose {
        let _ = write!(s, ", tau-b {:.4}", r.kendall_tau_b);
    }
    s
}

pub fn sweep_csv(r: &SweepResult) -> String {
    let mut s = String::from("parameter,value,mape\n");
    for (v, m) in &r.points {
        let _ = writeln!(s, "{},{v},{m}", r.parameter.name());
    }
    s
}

pub fn training_csv(t: &TrainOutcome) -> String {
    let mut s = String::from("pass,train_loss,validation_loss\n");
    for (i, l) in t.train_loss.iter().enumerate() {
        let v = t.validation_loss.get(i).map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{l},{v}", i + 1);
    }
    s
}

pub fn epoch_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

pub fn tuner_csv(history: &[Iteration]) -> String {
    let mut s = String::from("iteration,technique,candidate_mape,best_mape\n");
    for h in history {
        let _ = writeln!(s, "{},{},{},{}", h.iteration, h.technique.name(), h.candidate_mape, h.best_mape);
    }
    s
}

fn pct((m, sd): (f64, f64)) -> String {
    format!("{:.2}% ± {:.2}%", 100.0 * m, 100.0 * sd)
}

/// Per-seed lines and mean ± standard deviation across seeds.
pub fn recovery_text(r: &RecoveryReport) -> String {
    let mut s = String::new();
    for run in &r.runs {
        let _ = write!(
            s,
            "seed {}: surrogate {:.2}%, learned {:.2}% (tau {:.4}), random {:.2}%",
            run.seed,
            100.0 * run.surrogate.heldout_mape,
            100.0 * run.table.test.mape,
            run.table.test.kendall_tau,
            100.0 * run.table.init_test.mape
        );
        if let Some(b) = &run.baseline {
            let _ = write!(s, ", baseline {:.2}%", 100.0 * b.test.mape);
        }
        if let Some(l) = &run.subset {
            let _ = write!(s, ", latency-only {:.2}%", 100.0 * l.test.mape);
        }
        let _ = writeln!(s, ", {} simulator calls", run.surrogate.simulator_calls);
    }
    let _ = writeln!(s, "surrogate held-out error: {}", pct(r.surrogate_mape()));
    let _ = writeln!(s, "learned table test error: {}", pct(r.learned_mape()));
    let (t, ts) = r.learned_tau();
    let _ = writeln!(s, "learned table Kendall tau: {t:.4} ± {ts:.4}");
    let _ = writeln!(s, "random table test error: {}", pct(r.random_mape()));
    if let Some(b) = r.baseline_mape() {
        let _ = writeln!(s, "baseline tuner test error: {}", pct(b));
    }
    if let Some(l) = r.subset_mape() {
        let _ = writeln!(s, "latency-only test error: {}", pct(l));
    }
    s
}

/// Evaluation rows of every predictor of every seed.
pub fn recovery_csv(r: &RecoveryReport) -> String {
    let mut rows = Vec::new();
    for run in &r.runs {
        let mut add = |mut e: EvalReport| {
            e.seed = Some(run.seed);
            rows.push(e);
        };
        add(run.table.test.clone());
        add(run.table.init_test.clone());
        if let Some(b) = &run.baseline {
            add(b.test.clone());
        }
        if let Some(l) = &run.subset {
            let mut e = l.test.clone();
            e.predictor = "difftune-latency-only".into();
            add(e);
        }
    }
    eval_csv(&rows)
}
