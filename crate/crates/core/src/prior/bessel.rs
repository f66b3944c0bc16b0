//! Modified Bessel function of the second kind, order one.
//!
//! Power series for `x ≤ 2`; Steed's continued fraction (Temme's CF2 form)
//! for `x > 2`. The correlation kernel evaluates `x·K₁(x)` millions of times
//! per fit, so above 2 it reads a cubic Hermite table built once from the
//! exact values, and uses the asymptotic series past the table.

use std::sync::OnceLock;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_EPS: f64 = 1e-17;
const CF_EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// `K₁(x)` for `x > 0`. Returns `+∞` at zero and NaN for negative input.
pub fn bessel_k1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x <= 2.0 {
        k1_series(x)
    } else {
        k0_k1_continued_fraction(x).1
    }
}

/// `x·K₁(x)`, extended continuously to 1 at `x = 0`.
pub fn x_k1(x: f64) -> f64 {
    if x < 1e-8 {
        // x K1(x) = 1 + (x²/2) ln(x/2) + O(x²)
        return 1.0;
    }
    if x > 745.0 {
        return 0.0;
    }
    if x <= TABLE_LO {
        return x * k1_series(x);
    }
    if x >= TABLE_HI {
        return x * k1_asymptotic(x);
    }
    table().eval(x)
}

const TABLE_LO: f64 = 2.0;
const TABLE_HI: f64 = 40.0;
const TABLE_STEP: f64 = 0.004;

/// Knots of `g(x) = x·K₁(x)` with slopes `g'(x) = −x·K₀(x)`; interpolation
/// error stays below 1e-12.
struct HermiteTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    fn build() -> Self {
        let knots = ((TABLE_HI - TABLE_LO) / TABLE_STEP).round() as usize + 1;
        let (values, slopes) = (0..knots)
            .map(|i| {
                let x = TABLE_LO + i as f64 * TABLE_STEP;
                let (k0, k1) = k0_k1_continued_fraction(x);
                (x * k1, -x * k0)
            })
            .unzip();
        HermiteTable { values, slopes }
    }

    fn eval(&self, x: f64) -> f64 {
        let t = (x - TABLE_LO) / TABLE_STEP;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let u = t - i as f64;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.values[i] + h01 * self.values[i + 1] + TABLE_STEP * (h10 * self.slopes[i] + h11 * self.slopes[i + 1])
    }
}

fn table() -> &'static HermiteTable {
    static TABLE: OnceLock<HermiteTable> = OnceLock::new();
    TABLE.get_or_init(HermiteTable::build)
}

/// Hankel expansion, accurate to rounding for `x ≥ 40`.
fn k1_asymptotic(x: f64) -> f64 {
    let mu = 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() * sum
}

fn k1_series(x: f64) -> f64 {
    // K1(x) = 1/x + (x/2) Σ t_k [ln(x/2) − (ψ(k+1) + ψ(k+2))/2],  t_k = (x²/4)^k / (k!(k+1)!)
    let q = 0.25 * x * x;
    let log_half = (0.5 * x).ln();
    let mut t = 1.0;
    let mut harmonic_k = 0.0; // H_k
    let mut sum = 0.0;
    for k in 0..MAX_ITER {
        let kf = k as f64;
        let harmonic_k1 = harmonic_k + 1.0 / (kf + 1.0);
        let psi_sum = -2.0 * EULER_GAMMA + harmonic_k + harmonic_k1;
        let term = t * (log_half - 0.5 * psi_sum);
        sum += term;
        if term.abs() <= SERIES_EPS * sum.abs() && k > 0 {
            break;
        }
        harmonic_k = harmonic_k1;
        t *= q / ((kf + 1.0) * (kf + 2.0));
    }
    1.0 / x + 0.5 * x * sum
}

/// `(K₀(x), K₁(x))` for `x ≥ 2` by Steed's algorithm with order μ = 0.
fn k0_k1_continued_fraction(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < CF_EPS {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}
