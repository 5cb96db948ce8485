use crate::error::{ensure, Error, Result};

/// Tie-corrected Kendall rank correlation (tau-b), by enumerating all pairs.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    ensure!(x.len() == y.len(), "kendall_tau inputs differ in length");
    ensure!(x.len() >= 2, "kendall_tau needs at least two points");
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]);
            let dy = y[i].partial_cmp(&y[j]);
            let (Some(dx), Some(dy)) = (dx, dy) else {
                return Err(Error::invalid("kendall_tau inputs contain NaN"));
            };
            use std::cmp::Ordering::Equal;
            match (dx == Equal, dy == Equal) {
                (true, true) => {
                    ties_x += 1;
                    ties_y += 1;
                }
                (true, false) => ties_x += 1,
                (false, true) => ties_y += 1,
                (false, false) if dx == dy => concordant += 1,
                (false, false) => discordant += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(
            "kendall_tau is undefined when one side is entirely tied".into(),
        ));
    }
    Ok((concordant - discordant) as f64 / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_tied_is_undefined() {
        assert!(matches!(
            kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
    }
}
