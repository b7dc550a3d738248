//! Small summary statistics used across the pipeline.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over sqrt(n); `None` for fewer than two values.
    pub std_error: Option<f64>,
}

impl Summary {
    /// Sums are accumulated left to right so identical inputs give
    /// bit-identical outputs. A constant sample has exactly its value as
    /// mean and a standard error of exactly 0.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: 0.0,
                std_error: None,
            };
        }
        if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
            return Self {
                n,
                mean: values[0],
                std_error: (n > 1).then_some(0.0),
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        });
        Self { n, mean, std_error }
    }
}

/// Trapezoidal area under the piecewise-linear curve through `(xs, ys)`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` when either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_basics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s.std_error.unwrap() - sd / 2.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[7.0]).std_error, None);
        assert_eq!(Summary::of(&[2.0; 5]).std_error, Some(0.0));
        let c = Summary::of(&[0.1 * 0.3; 7]);
        assert_eq!((c.mean, c.std_error), (0.1 * 0.3, Some(0.0)));
    }

    #[test]
    fn trapezoid_area() {
        assert_eq!(trapezoid(&[0.0, 0.5, 1.0], &[0.0, 1.0, 1.0]), 0.75);
        assert_eq!(trapezoid(&[0.0, 1.0], &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn spearman_cases() {
        let x = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(spearman(&x, &[1.0, 4.0, 9.0, 16.0]), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0; 4]), None);
        // Hand-computed: ranks y = [1, 2, 3.5, 3.5] vs [1, 2, 3, 4].
        let rho = spearman(&x, &[0.1, 0.5, 1.0, 1.0]).unwrap();
        assert!((rho - 4.5 / (5.0f64 * 4.5).sqrt()).abs() < 1e-12);
    }
}
