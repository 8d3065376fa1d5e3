//! Trajectory integration: fixed-step RK4 for models, adaptive
//! Dormand–Prince with dense output for reference data.

use std::path::Path;

use crate::ad::Scalar;
use crate::{check_dim, Error, Result};

/// Sampled solution of `ẋ = f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        check_dim("trajectory length", times.len(), states.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("trajectory times must be strictly increasing".into()));
        }
        if let Some(first) = states.first() {
            for s in &states {
                check_dim("trajectory state", first.len(), s.len())?;
            }
        }
        if states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("trajectory states must be finite".into()));
        }
        Ok(Trajectory { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("empty trajectory")
    }

    /// CSV with header `t,x1,…,xd`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(s.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::Shape("trajectory CSV must start with column `t`".into()));
        }
        let (mut times, mut states) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Shape(format!("bad number `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            times.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        Trajectory::new(times, states)
    }
}

fn axpy<S: Scalar>(x: &[S], k: &[S], h: f64) -> Vec<S> {
    x.iter().zip(k).map(|(&a, &b)| a + b * h).collect()
}

/// One classical RK4 step of any sign, over any scalar type.
pub fn rk4_step_with<S, F>(f: &mut F, x: &[S], dt: f64) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<Vec<S>>,
{
    let k1 = f(x)?;
    let k2 = f(&axpy(x, &k1, dt / 2.0))?;
    let k3 = f(&axpy(x, &k2, dt / 2.0))?;
    let k4 = f(&axpy(x, &k3, dt))?;
    Ok((0..x.len())
        .map(|i| x[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
        .collect())
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("time step must be positive, got {dt}")))
    }
}

/// One RK4 step with `dt > 0`.
pub fn rk4_step<F>(mut f: F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    check_dt(dt)?;
    let y = rk4_step_with(&mut f, x, dt)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration { step: 0 });
    }
    Ok(y)
}

/// `n` RK4 steps from `x0`; returns `n + 1` states at times `k·dt`.
pub fn rollout<F>(mut f: F, x0: &[f64], dt: f64, n: usize) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    check_dt(dt)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.to_vec());
    for step in 1..=n {
        let y = rk4_step_with(&mut f, states.last().unwrap(), dt).map_err(|e| match e {
            Error::NonFinite { .. } => Error::Integration { step },
            other => other,
        })?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { step });
        }
        states.push(y);
    }
    let times = (0..=n).map(|k| k as f64 * dt).collect();
    Ok(Trajectory { times, states })
}

/// Error tolerances for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { abs: 1e-8, rel: 1e-8 }
    }
}

// Dormand–Prince 5(4) coefficients. The field is autonomous, so the stage
// times are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn comb(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
        .collect()
}

/// Adaptive Dormand–Prince integration from `x0` at `times[0]`, sampled
/// at every entry of `times` through the method's dense output.
pub fn rk45_reference<F>(mut f: F, x0: &[f64], times: &[f64], tol: Tolerances) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(tol.abs > 0.0 && tol.rel > 0.0) {
        return Err(Error::Invalid("tolerances must be positive".into()));
    }
    if times.is_empty() {
        return Err(Error::Invalid("no sample times requested".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("sample times must be strictly increasing".into()));
    }
    let d = x0.len();
    let t_end = *times.last().unwrap();
    let mut t = times[0];
    let mut y = x0.to_vec();
    let mut out = vec![y.clone()];
    let mut next = 1;
    let mut k1 = f(&y)?;

    let scale = |a: &[f64], b: &[f64], i: usize| tol.abs + tol.rel * a[i].abs().max(b[i].abs());
    let mut h = {
        let d0 = (0..d).map(|i| (y[i] / scale(&y, &y, i)).powi(2)).sum::<f64>().sqrt();
        let d1 = (0..d).map(|i| (k1[i] / scale(&y, &y, i)).powi(2)).sum::<f64>().sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(t_end - t).max(1e-10)
    };

    let mut steps = 0usize;
    while next < times.len() {
        steps += 1;
        if steps > 10_000_000 {
            return Err(Error::StepUnderflow { t });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let h_step = h.min(t_end - t);
        let k2 = f(&comb(&y, h_step, &[(A21, &k1)]))?;
        let k3 = f(&comb(&y, h_step, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(&comb(&y, h_step, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(&comb(&y, h_step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(&comb(&y, h_step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
        let y1 = comb(&y, h_step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(&y1)?;
        let err = ((0..d)
            .map(|i| {
                let e = h_step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                (e / scale(&y, &y1, i)).powi(2)
            })
            .sum::<f64>()
            / d.max(1) as f64)
            .sqrt();
        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            h = h_step * 0.2;
            continue;
        }
        if err <= 1.0 {
            let t_new = if h_step == t_end - t { t_end } else { t + h_step };
            // Dense output over [t, t_new].
            while next < times.len() && times[next] <= t_new {
                let theta = (times[next] - t) / h_step;
                let th1 = 1.0 - theta;
                let sample = (0..d)
                    .map(|i| {
                        let ydiff = y1[i] - y[i];
                        let bspl = h_step * k1[i] - ydiff;
                        let r4 = ydiff - h_step * k7[i] - bspl;
                        let r5 = h_step
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                        y[i] + theta * (ydiff + th1 * (bspl + theta * (r4 + th1 * r5)))
                    })
                    .collect();
                out.push(sample);
                next += 1;
            }
            t = t_new;
            y = y1;
            k1 = k7;
        }
        let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
        h = h_step * fac;
    }
    Ok(Trajectory { times: times.to_vec(), states: out })
}

/// `start, start + dt, …` with `n + 1` entries.
pub fn uniform_times(start: f64, dt: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| start + k as f64 * dt).collect()
}
