// Small numerical helpers shared across modules.

/// Neumaier compensated sum, deterministic for a fixed input order.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
                .collect()
        }
    }
}

/// Trapezoidal rule on a (possibly non-uniform) grid.
pub(crate) fn trapz(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    }
    acc
}

/// Extended Simpson rule with end weights 3/8, 7/6, 23/24 on a uniform grid.
/// Falls back to the trapezoidal rule below six points.
pub(crate) fn simpson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 6 {
        return trapz(x, y);
    }
    let h = (x[n - 1] - x[0]) / (n - 1) as f64;
    let mut acc = KahanSum::default();
    for (i, yi) in y.iter().enumerate() {
        let w = match i.min(n - 1 - i) {
            0 => 3.0 / 8.0,
            1 => 7.0 / 6.0,
            2 => 23.0 / 24.0,
            _ => 1.0,
        };
        acc.add(w * yi);
    }
    acc.value() * h
}
