/// Rank of the row space of `rows` by Gaussian elimination with partial
/// pivoting. A column is a pivot when its best candidate exceeds `1e-8` times
/// the largest magnitude seen so far.
pub fn matrix_rank(mut rows: Vec<Vec<f64>>) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let ncols = rows[0].len();
    let mut scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    for col in 0..ncols {
        if rank == rows.len() {
            break;
        }
        let (best, mag) = (rank..rows.len())
            .map(|r| (r, rows[r][col].abs()))
            .fold((rank, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= 1e-8 * scale {
            continue;
        }
        scale = scale.max(mag);
        rows.swap(rank, best);
        let pivot_row = rows[rank].clone();
        let p = pivot_row[col];
        for row in &mut rows[rank + 1..] {
            let f = row[col] / p;
            if f != 0.0 {
                for (x, y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * y;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_ranks() {
        assert_eq!(matrix_rank(vec![]), 0);
        assert_eq!(matrix_rank(vec![vec![0.0, 0.0]]), 0);
        assert_eq!(matrix_rank(vec![vec![1.0, 2.0], vec![2.0, 4.0]]), 1);
        assert_eq!(
            matrix_rank(vec![
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0],
                vec![1.0, 1.0, 2.0]
            ]),
            2
        );
        assert_eq!(matrix_rank(vec![vec![0.5, 0.0], vec![0.0, 1.0 / 3.0]]), 2);
    }
}
