/// Empirical CDF as the jump points of a right-continuous step function:
/// `(x, F(x))` for each distinct finite value in ascending order.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => points.push((x, f)),
        }
    }
    points
}
