//! Measurement synthesis along constant time-of-flight ellipsoids and its
//! reverse-mode derivative.

use super::ellipsoid::{semi_axes, EllipsoidFrame};
use super::sampling::DirectionSamples;
use super::RenderError;
use crate::geometry::{derive_seed, Vec3};
use crate::scene::{magnitude_gradient, SceneModel, NORMAL_EPS};
use crate::simulator::SensorPose;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

/// Rays are split into this many contiguous chunks, each with its own
/// gradient buffer, summed in chunk order. The split does not depend on the
/// thread count, so results are reproducible.
pub(crate) const GRAD_CHUNKS: usize = 4;

/// Offset inside smooth magnitudes used by the priors.
pub const PRIOR_EPS: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Cumulative transmittance `T_i = Π_{k<i} exp(−ζ·m_k·(l_{k+1} − l_k))`.
pub fn transmittance(mags: &[f64], depths: &[f64], zeta: f64) -> Result<Vec<f64>, RenderError> {
    if mags.len() != depths.len() {
        return Err(RenderError::MisalignedSamples { synth: mags.len(), target: depths.len() });
    }
    if depths.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RenderError::NonMonotoneDepths);
    }
    let mut out = Vec::with_capacity(mags.len());
    let mut t = 1.0;
    for k in 0..mags.len() {
        out.push(t);
        if k + 1 < mags.len() {
            t *= (-zeta * mags[k].abs() * (depths[k + 1] - depths[k])).exp();
        }
    }
    Ok(out)
}

/// Expected point of a ray, weighted by `|σ_i·T_i|`. When every weight is
/// zero the middle sample is returned and the flag is set.
pub fn expected_point(sigmas: &[Complex64], trans: &[f64], points: &[Vec3]) -> (Vec3, bool) {
    let mut total = 0.0;
    let mut acc = Vec3::ZERO;
    for ((s, t), p) in sigmas.iter().zip(trans).zip(points) {
        let w = (s * t).norm();
        total += w;
        acc += *p * w;
    }
    if total > 0.0 {
        (acc / total, false)
    } else if points.is_empty() {
        (Vec3::ZERO, true)
    } else {
        (points[points.len() / 2], true)
    }
}

/// Resolved knobs of the forward model and loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardSettings {
    /// Transmission falloff; zero disables occlusion.
    pub zeta: f64,
    pub lambertian: bool,
    pub coherent: bool,
    pub lambda_sparse: f64,
    pub lambda_tv_space: f64,
    pub lambda_tv_phase: f64,
    pub d_reg: f64,
    /// Finite-difference step for models without analytic Jacobians.
    pub fd_step: f64,
    /// Solid angle (sr) that counts as one unit of surface measure.
    pub unit_solid_angle: f64,
}

/// One sensor's data for a synthesis step.
#[derive(Debug, Clone, Copy)]
pub struct SensorProblem<'a> {
    pub pose: &'a SensorPose,
    /// Strictly increasing semi-major axes.
    pub ranges: &'a [f64],
    /// Target analytic values at each range.
    pub targets: &'a [Complex64],
    pub directions: &'a DirectionSamples,
    /// Seed for the companion offsets of the spatial priors.
    pub reg_seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub data: f64,
    pub sparse: f64,
    pub tv_space: f64,
    pub tv_phase: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    x: Vec3,
    l: f64,
    range: usize,
    inside: bool,
    sigma: Complex64,
    jac: [Complex64; 3],
    /// Magnitude gradient and the clamped Lambertian factor.
    grad_mag: Vec3,
    lambert: f64,
    t: f64,
}

#[derive(Debug, Clone, Copy)]
struct Companion {
    sample: usize,
    x: Vec3,
    sigma: Complex64,
}

#[derive(Debug, Clone, Default)]
struct ReturnRay {
    active: bool,
    weight_total: f64,
    expected: Vec3,
    dir: Vec3,
    length: f64,
    /// (range index, depth from the receiver, σ, ∂σ/∂x) per kept sample.
    samples: Vec<(usize, f64, Complex64, [Complex64; 3])>,
    trans: f64,
}

#[derive(Debug, Clone)]
struct RayTape {
    dir: Vec3,
    weight: f64,
    samples: Vec<Sample>,
    ret: ReturnRay,
    companions: Vec<Companion>,
}

fn inner(a: Complex64, b: Complex64) -> f64 {
    a.re * b.re + a.im * b.im
}

fn wrap_phase(d: f64) -> f64 {
    let w = d.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn companion_dir(seed: u64, ray: usize, sample: usize) -> Vec3 {
    let h1 = derive_seed(seed, ((ray as u64) << 24) ^ sample as u64);
    let h2 = derive_seed(h1, 0x5eed);
    let u = (h1 >> 11) as f64 / (1u64 << 53) as f64;
    let v = (h2 >> 11) as f64 / (1u64 << 53) as f64;
    let z = 1.0 - 2.0 * u;
    let s = (1.0 - z * z).max(0.0).sqrt();
    let (sn, cs) = (TAU * v).sin_cos();
    Vec3::new(s * cs, s * sn, z)
}

/// Scatterer value entering the synthesis: the complex field, or its
/// magnitude in incoherent mode.
fn effective(sigma: Complex64, coherent: bool) -> Complex64 {
    if coherent {
        sigma
    } else {
        Complex64::new(sigma.norm(), 0.0)
    }
}

fn effective_backward(sigma: Complex64, cot: Complex64, coherent: bool) -> Complex64 {
    if coherent {
        cot
    } else {
        let m = sigma.norm();
        if m > 0.0 {
            sigma * (cot.re / m)
        } else {
            ZERO
        }
    }
}

/// Cotangents on `σ` and its Jacobian from `q = ∂L/∂(∇|σ|)`.
fn magnitude_gradient_backward(sigma: Complex64, jac: &[Complex64; 3], g: Vec3, q: Vec3) -> (Complex64, [Complex64; 3]) {
    let m = sigma.norm();
    if m == 0.0 {
        return (ZERO, [ZERO; 3]);
    }
    let (ga, qa) = (g.to_array(), q.to_array());
    let mut cot_sigma = ZERO;
    let mut cot_jac = [ZERO; 3];
    for k in 0..3 {
        cot_jac[k] = sigma * (qa[k] / m);
        cot_sigma += (jac[k] - sigma * (ga[k] / m)) * (qa[k] / m);
    }
    (cot_sigma, cot_jac)
}

fn lambert_factor(sigma: Complex64, jac: &[Complex64; 3], dir: Vec3) -> (Vec3, f64) {
    match magnitude_gradient(sigma, jac) {
        Some(g) if g.norm() >= NORMAL_EPS => (g, (g.dot(dir) / g.norm()).max(0.0)),
        _ => (Vec3::ZERO, 0.0),
    }
}

fn trace_ray(
    model: &dyn SceneModel,
    frame: &EllipsoidFrame,
    problem: &SensorProblem,
    st: &ForwardSettings,
    ray: usize,
) -> RayTape {
    let pose = problem.pose;
    let bounds = model.bounds();
    let dir = problem.directions.dirs[ray];
    let mut samples = Vec::with_capacity(problem.ranges.len());
    for (i, &r) in problem.ranges.iter().enumerate() {
        let Ok(l) = frame.depth(pose.tx_origin, dir, r) else { continue };
        let x = pose.tx_origin + dir * l;
        let inside = bounds.contains(x);
        let (sigma, jac) = if !inside {
            (ZERO, [ZERO; 3])
        } else if st.lambertian {
            model.query_jacobian(x, st.fd_step)
        } else {
            (model.query(x), [ZERO; 3])
        };
        let (grad_mag, lambert) = if st.lambertian { lambert_factor(sigma, &jac, dir) } else { (Vec3::ZERO, 1.0) };
        samples.push(Sample { x, l, range: i, inside, sigma, jac, grad_mag, lambert, t: 1.0 });
    }
    let mut t = 1.0;
    for k in 0..samples.len() {
        samples[k].t = t;
        if k + 1 < samples.len() {
            t *= (-st.zeta * samples[k].sigma.norm() * (samples[k + 1].l - samples[k].l)).exp();
        }
    }

    let mut ret = ReturnRay { trans: 1.0, ..Default::default() };
    if !pose.is_monostatic() && st.zeta > 0.0 {
        let weight_total: f64 = samples.iter().map(|s| s.sigma.norm() * s.t).sum();
        if weight_total > 0.0 {
            let expected = samples.iter().fold(Vec3::ZERO, |acc, s| acc + s.x * (s.sigma.norm() * s.t)) / weight_total;
            let v = expected - pose.rx_origin;
            let length = v.norm();
            if length > 0.0 {
                let rdir = v / length;
                let mut kept = Vec::new();
                for (k, &r) in problem.ranges.iter().enumerate() {
                    let Ok(l) = frame.depth(pose.rx_origin, rdir, r) else { continue };
                    if l >= length {
                        continue;
                    }
                    let x = pose.rx_origin + rdir * l;
                    let (sigma, jac) = if bounds.contains(x) { model.query_jacobian(x, st.fd_step) } else { (ZERO, [ZERO; 3]) };
                    kept.push((k, l, sigma, jac));
                }
                let mut s = 0.0;
                for (n, &(_, l, sigma, _)) in kept.iter().enumerate() {
                    let next = kept.get(n + 1).map_or(length, |k| k.1);
                    s += sigma.norm() * (next - l);
                }
                ret = ReturnRay {
                    active: true,
                    weight_total,
                    expected,
                    dir: rdir,
                    length,
                    samples: kept,
                    trans: (-st.zeta * s).exp(),
                };
            }
        }
    }

    let mut companions = Vec::new();
    if st.lambda_tv_space > 0.0 || st.lambda_tv_phase > 0.0 {
        for (k, s) in samples.iter().enumerate() {
            if !s.inside {
                continue;
            }
            let x = s.x + companion_dir(problem.reg_seed, ray, k) * st.d_reg;
            if bounds.contains(x) {
                companions.push(Companion { sample: k, x, sigma: model.query(x) });
            }
        }
    }
    RayTape { dir, weight: problem.directions.weights[ray] / st.unit_solid_angle, samples, ret, companions }
}

impl RayTape {
    fn contribute(&self, st: &ForwardSettings, out: &mut [Complex64]) {
        for s in &self.samples {
            if s.inside {
                out[s.range] += effective(s.sigma, st.coherent) * (s.lambert * self.weight * s.t * self.ret.trans);
            }
        }
    }

    /// Prior values: (Σ sparse, count, Σ tv-space, Σ tv-phase, pair count).
    fn priors(&self, st: &ForwardSettings) -> (f64, usize, f64, f64, usize) {
        let mut sparse = 0.0;
        let mut count = 0;
        for s in self.samples.iter().filter(|s| s.inside) {
            sparse += (s.sigma.norm_sqr() + PRIOR_EPS).sqrt();
            count += 1;
        }
        let (mut tvs, mut tvp) = (0.0, 0.0);
        for c in &self.companions {
            let s = &self.samples[c.sample];
            let diff = effective(s.sigma, st.coherent) - effective(c.sigma, st.coherent);
            tvs += (diff.norm_sqr() + PRIOR_EPS).sqrt();
            if st.coherent {
                tvp += wrap_phase(s.sigma.arg() - c.sigma.arg()).abs();
            }
        }
        (sparse, count, tvs, tvp, self.companions.len())
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        model: &dyn SceneModel,
        frame: &EllipsoidFrame,
        problem: &SensorProblem,
        st: &ForwardSettings,
        data_cot: &[Complex64],
        prior_scale: (f64, f64, f64),
        grad: &mut [f64],
    ) {
        let n = self.samples.len();
        let r_trans = self.ret.trans;
        let mut cot_sigma = vec![ZERO; n];
        let mut cot_jac = vec![[ZERO; 3]; n];
        let mut d_t = vec![0.0; n];
        let mut d_m = vec![0.0; n];
        let mut d_r = 0.0;

        for (k, s) in self.samples.iter().enumerate() {
            if !s.inside {
                continue;
            }
            let g = data_cot[s.range];
            let eff = effective(s.sigma, st.coherent);
            let l_val = eff * s.lambert;
            let cot_l = g * (self.weight * s.t * r_trans);
            d_t[k] += inner(g, l_val * (self.weight * r_trans));
            d_r += inner(g, l_val * (self.weight * s.t));
            cot_sigma[k] += effective_backward(s.sigma, cot_l * s.lambert, st.coherent);
            if st.lambertian && s.lambert > 0.0 {
                let d_lambert = inner(cot_l, eff);
                let gn = s.grad_mag.norm();
                let nrm = s.grad_mag / gn;
                let q = (self.dir - nrm * s.lambert) * (d_lambert / gn);
                let (cs, cj) = magnitude_gradient_backward(s.sigma, &s.jac, s.grad_mag, q);
                cot_sigma[k] += cs;
                for a in 0..3 {
                    cot_jac[k][a] += cj[a];
                }
            }
        }

        if self.ret.active && d_r != 0.0 {
            self.return_backward(model, frame, problem, st, d_r, &mut d_t, &mut d_m, grad);
        }

        // T_i depends on m_k for k < i through the gap to the next sample.
        let mut suffix = 0.0;
        for k in (0..n).rev() {
            if k + 1 < n {
                let gap = self.samples[k + 1].l - self.samples[k].l;
                d_m[k] += -st.zeta * gap * suffix;
            }
            suffix += d_t[k] * self.samples[k].t;
        }

        let (w_sparse, w_tvs, w_tvp) = prior_scale;
        for (k, s) in self.samples.iter().enumerate() {
            if !s.inside {
                continue;
            }
            let m = s.sigma.norm();
            if m > 0.0 && d_m[k] != 0.0 {
                cot_sigma[k] += s.sigma * (d_m[k] / m);
            }
            if w_sparse > 0.0 {
                cot_sigma[k] += s.sigma * (w_sparse / (s.sigma.norm_sqr() + PRIOR_EPS).sqrt());
            }
        }
        for c in &self.companions {
            let s = &self.samples[c.sample];
            let mut cot_c = ZERO;
            if w_tvs > 0.0 {
                let diff = effective(s.sigma, st.coherent) - effective(c.sigma, st.coherent);
                let g = diff * (w_tvs / (diff.norm_sqr() + PRIOR_EPS).sqrt());
                cot_sigma[c.sample] += effective_backward(s.sigma, g, st.coherent);
                cot_c -= effective_backward(c.sigma, g, st.coherent);
            }
            if w_tvp > 0.0 && st.coherent {
                let d = wrap_phase(s.sigma.arg() - c.sigma.arg());
                if d != 0.0 {
                    let dphase = |z: Complex64| Complex64::new(-z.im, z.re) / (z.norm_sqr() + PRIOR_EPS);
                    let w = w_tvp * d.signum();
                    cot_sigma[c.sample] += dphase(s.sigma) * w;
                    cot_c -= dphase(c.sigma) * w;
                }
            }
            if cot_c != ZERO {
                model.backward(c.x, cot_c, grad);
            }
        }

        for (k, s) in self.samples.iter().enumerate() {
            if !s.inside {
                continue;
            }
            if cot_jac[k].iter().any(|c| *c != ZERO) {
                model.backward_jacobian(s.x, st.fd_step, cot_sigma[k], cot_jac[k], grad);
            } else if cot_sigma[k] != ZERO {
                model.backward(s.x, cot_sigma[k], grad);
            }
        }
    }

    /// Return-ray transmittance back to the scene, the transmit magnitudes
    /// (through the expected point) and the transmit transmittances.
    #[allow(clippy::too_many_arguments)]
    fn return_backward(
        &self,
        model: &dyn SceneModel,
        frame: &EllipsoidFrame,
        problem: &SensorProblem,
        st: &ForwardSettings,
        d_r: f64,
        d_t: &mut [f64],
        d_m: &mut [f64],
        grad: &mut [f64],
    ) {
        let ret = &self.ret;
        let d_s = -st.zeta * ret.trans * d_r;
        let kept = &ret.samples;
        let nk = kept.len();
        let x_axis = frame.axes[0];
        let half_d = frame.d / 2.0;
        let mut d_u = Vec3::ZERO;
        let mut d_len = 0.0;
        for (n, &(k, l, sigma, jac)) in kept.iter().enumerate() {
            let next = kept.get(n + 1).map_or(ret.length, |c| c.1);
            let m = sigma.norm();
            let d_mk = d_s * (next - l);
            let prev_m = if n > 0 { kept[n - 1].2.norm() } else { 0.0 };
            let mut d_l = d_s * (prev_m - m);
            if n + 1 == nk {
                d_len += d_s * m;
            }
            if m > 0.0 && d_mk != 0.0 {
                model.backward(ret.dir * l + problem.pose.rx_origin, sigma * (d_mk / m), grad);
                if let Some(g) = magnitude_gradient(sigma, &jac) {
                    let d_x = g * d_mk;
                    d_u += d_x * l;
                    d_l += d_x.dot(ret.dir);
                }
            }
            // l = b²/(a + (d/2)·u·x̂) from the receiver focus.
            let (_, b, _) = semi_axes(problem.ranges[k], frame.d).expect("kept samples are valid");
            d_u += x_axis * (-d_l * l * l * half_d / (b * b));
        }
        let u = ret.dir;
        let d_v = (d_u - u * d_u.dot(u)) / ret.length + u * d_len;
        for (k, s) in self.samples.iter().enumerate() {
            let d_w = d_v.dot(s.x - ret.expected) / ret.weight_total;
            if d_w == 0.0 {
                continue;
            }
            d_m[k] += d_w * s.t;
            d_t[k] += d_w * s.sigma.norm();
        }
    }
}

fn trace_all(model: &dyn SceneModel, frame: &EllipsoidFrame, problem: &SensorProblem, st: &ForwardSettings) -> Vec<Vec<RayTape>> {
    let n = problem.directions.len();
    let chunk = n.div_ceil(GRAD_CHUNKS).max(1);
    let bounds: Vec<(usize, usize)> = (0..n).step_by(chunk).map(|a| (a, (a + chunk).min(n))).collect();
    bounds.par_iter().map(|&(a, b)| (a..b).map(|j| trace_ray(model, frame, problem, st, j)).collect()).collect()
}

fn validate(problem: &SensorProblem) -> Result<(), RenderError> {
    if problem.ranges.len() != problem.targets.len() {
        return Err(RenderError::MisalignedSamples { synth: problem.ranges.len(), target: problem.targets.len() });
    }
    if problem.ranges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RenderError::NonMonotoneDepths);
    }
    if problem.directions.dirs.len() != problem.directions.weights.len() {
        return Err(RenderError::InvalidConfig("direction weights misaligned".into()));
    }
    Ok(())
}

/// Synthesized analytic values at each range of `problem` (targets unused).
pub fn synthesize(model: &dyn SceneModel, problem: &SensorProblem, st: &ForwardSettings) -> Result<Vec<Complex64>, RenderError> {
    if problem.ranges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RenderError::NonMonotoneDepths);
    }
    let frame = EllipsoidFrame::new(problem.pose.tx_origin, problem.pose.rx_origin);
    let tapes = trace_all(model, &frame, problem, st);
    let mut out = vec![ZERO; problem.ranges.len()];
    for tape in tapes.iter().flatten() {
        tape.contribute(st, &mut out);
    }
    Ok(out)
}

/// Data term `‖ŝ′ − ŝ‖₂` (coherent) or `‖|ŝ′| − |ŝ|‖₂` (incoherent) and
/// its cotangent on each synthesized value.
pub fn bp_loss(synth: &[Complex64], target: &[Complex64], coherent: bool) -> Result<(f64, Vec<Complex64>), RenderError> {
    if synth.len() != target.len() {
        return Err(RenderError::MisalignedSamples { synth: synth.len(), target: target.len() });
    }
    if coherent {
        let e: Vec<Complex64> = synth.iter().zip(target).map(|(a, b)| a - b).collect();
        let norm = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let cot = if norm > 0.0 { e.iter().map(|z| z / norm).collect() } else { vec![ZERO; e.len()] };
        Ok((norm, cot))
    } else {
        let e: Vec<f64> = synth.iter().zip(target).map(|(a, b)| a.norm() - b.norm()).collect();
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cot = synth
            .iter()
            .zip(&e)
            .map(|(z, v)| {
                let m = z.norm();
                if norm > 0.0 && m > 0.0 {
                    z * (v / (norm * m))
                } else {
                    ZERO
                }
            })
            .collect();
        Ok((norm, cot))
    }
}

/// Full per-sensor loss. When `grad` is given, parameter gradients are
/// accumulated into it.
pub fn sensor_loss(
    model: &dyn SceneModel,
    problem: &SensorProblem,
    st: &ForwardSettings,
    grad: Option<&mut [f64]>,
) -> Result<LossTerms, RenderError> {
    validate(problem)?;
    let frame = EllipsoidFrame::new(problem.pose.tx_origin, problem.pose.rx_origin);
    let tapes = trace_all(model, &frame, problem, st);
    let mut synth = vec![ZERO; problem.ranges.len()];
    let (mut sparse, mut count, mut tvs, mut tvp, mut pairs) = (0.0, 0usize, 0.0, 0.0, 0usize);
    for tape in tapes.iter().flatten() {
        tape.contribute(st, &mut synth);
        let p = tape.priors(st);
        sparse += p.0;
        count += p.1;
        tvs += p.2;
        tvp += p.3;
        pairs += p.4;
    }
    let (data, cot) = bp_loss(&synth, problem.targets, st.coherent)?;
    let mean = |v: f64, n: usize| if n > 0 { v / n as f64 } else { 0.0 };
    let terms =
        LossTerms { data, sparse: mean(sparse, count), tv_space: mean(tvs, pairs), tv_phase: mean(tvp, pairs), total: 0.0 };
    let total =
        terms.data + st.lambda_sparse * terms.sparse + st.lambda_tv_space * terms.tv_space + st.lambda_tv_phase * terms.tv_phase;
    let terms = LossTerms { total, ..terms };

    if let Some(grad) = grad {
        let scale = (
            if count > 0 { st.lambda_sparse / count as f64 } else { 0.0 },
            if pairs > 0 { st.lambda_tv_space / pairs as f64 } else { 0.0 },
            if pairs > 0 { st.lambda_tv_phase / pairs as f64 } else { 0.0 },
        );
        let partials: Vec<Vec<f64>> = tapes
            .par_iter()
            .map(|chunk| {
                let mut g = vec![0.0; grad.len()];
                for tape in chunk {
                    tape.backward(model, &frame, problem, st, &cot, scale, &mut g);
                }
                g
            })
            .collect();
        for p in partials {
            for (a, b) in grad.iter_mut().zip(&p) {
                *a += b;
            }
        }
    }
    Ok(terms)
}
