use alloc::vec::Vec;

use super::{AutodiffError, Gradients, Graph, NodeId, ParamStore};
use crate::math;

/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    math::abs(analytic - numeric) / (math::abs(analytic) + math::abs(numeric)).max(1e-8)
}

/// Largest relative error between backward and central differences over
/// every scalar of `point`.
pub fn gradient_check<F>(f: F, point: &ParamStore, h: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId, AutodiffError>,
{
    let coords: Vec<(usize, usize)> = (0..point.len())
        .flat_map(|t| (0..point.get(t).len()).map(move |i| (t, i)))
        .collect();
    gradient_check_coords(f, &[point], 0, &coords, h)
}

/// Gradient check of the selected `(tensor, element)` coordinates of
/// `stores[wrt]`; the other stores are held fixed.
pub fn gradient_check_coords<F>(
    f: F,
    stores: &[&ParamStore],
    wrt: usize,
    coords: &[(usize, usize)],
    h: f64,
) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId, AutodiffError>,
{
    let trainable: Vec<bool> = (0..stores.len()).map(|i| i == wrt).collect();
    let mut grads = Gradients::new(stores, &trainable);
    {
        let mut g = Graph::with_trainable(stores, &trainable);
        let loss = f(&mut g)?;
        g.backward(loss, &mut grads)?;
    }
    let analytic = grads.store(wrt).ok_or(AutodiffError::StoreMismatch)?;

    let eval = |perturbed: &ParamStore| -> Result<f64, AutodiffError> {
        let mut all: Vec<&ParamStore> = stores.to_vec();
        all[wrt] = perturbed;
        let mut g = Graph::with_trainable(&all, &alloc::vec![false; all.len()]);
        let loss = f(&mut g)?;
        Ok(g.scalar(loss))
    };

    let mut work = stores[wrt].clone();
    let mut worst = 0.0f64;
    for &(t, i) in coords {
        let x = work.get(t).data()[i];
        work.get_mut(t).data_mut()[i] = x + h;
        let up = eval(&work)?;
        work.get_mut(t).data_mut()[i] = x - h;
        let down = eval(&work)?;
        work.get_mut(t).data_mut()[i] = x;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic.get(t).data()[i], numeric));
    }
    Ok(worst)
}
