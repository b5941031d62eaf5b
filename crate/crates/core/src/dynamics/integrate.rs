//! Time propagation of `i ∂ψ/∂t = H(t) ψ`.
//!
//! The window is cut at envelope breakpoints. Segments where the envelope is
//! constant are advanced with Lanczos approximations of `exp(−iHΔt)`, which
//! handle very large interaction shifts without step-size collapse. Smooth
//! time-dependent segments use an adaptive Dormand–Prince 5(4) pair, carried
//! in the interaction picture of the diagonal when interaction shifts
//! dominate the laser coupling. A fourth-order commutator-free Magnus scheme
//! with Lanczos exponentials is available on request. Small stiff problems
//! use exponentials from a dense eigen-decomposition instead of Lanczos.
//! Without interactions on a complete basis the state is a product, and each
//! unit is propagated on its own.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::model::{Hamiltonian, Model};
use super::tridiag::{symmetric_eigen, symmetric_tridiagonal_eigen};
use crate::error::{Error, Result};
use crate::scalar::{lit, norm_sqr, Amp, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exponential steps on constant segments, Runge–Kutta on smooth ones.
    Auto,
    /// Dormand–Prince everywhere.
    RungeKutta,
    /// Lanczos exponentials everywhere (Magnus on smooth segments).
    Exponential,
}

#[derive(Clone, Copy, Debug)]
pub struct PropagationOptions<T: Real> {
    pub method: Method,
    /// Per-step error bound relative to the state norm (Runge–Kutta, Magnus).
    pub rtol: T,
    pub atol: T,
    /// Per-step absolute error bound of a Lanczos exponential.
    pub krylov_tol: T,
    pub krylov_dim: usize,
    /// `spectral bound × step` above which a small problem switches from
    /// Lanczos to dense exponentials.
    pub stiffness_limit: T,
    /// Largest dimension for dense exponentials.
    pub dense_limit: usize,
    /// Bound on step attempts per propagation.
    pub max_steps: usize,
}

impl<T: Real> Default for PropagationOptions<T> {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            rtol: lit(1e-9),
            atol: lit(1e-14),
            krylov_tol: lit(1e-12),
            krylov_dim: 30,
            stiffness_limit: lit(2000.0),
            dense_limit: 1024,
            max_steps: 2_000_000,
        }
    }
}

/// Amplitudes over a basis at a given time.
#[derive(Clone, Debug, PartialEq)]
pub struct ManyBodyState<T: Real> {
    pub amplitudes: Vec<Amp<T>>,
    pub time: T,
}

impl<T: Real> ManyBodyState<T> {
    /// All population in basis state 0, the collective ground state.
    pub fn ground(dim: usize, time: T) -> Self {
        let mut amplitudes = vec![Complex::new(T::zero(), T::zero()); dim];
        amplitudes[0] = Complex::new(T::one(), T::zero());
        Self { amplitudes, time }
    }

    pub fn norm_sqr(&self) -> T {
        norm_sqr(&self.amplitudes)
    }

    /// Complex conjugate of every amplitude.
    pub fn conjugated(&self) -> Self {
        Self { amplitudes: self.amplitudes.iter().map(|c| c.conj()).collect(), time: self.time }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PropagationStats<T: Real> {
    pub steps: usize,
    /// Largest `|‖ψ(t)‖² − ‖ψ(t₀)‖²|` seen on accepted steps.
    pub max_norm_drift: T,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub states: Vec<ManyBodyState<T>>,
    pub stats: PropagationStats<T>,
}

/// Propagates `initial` and returns the state at every sample time.
pub fn propagate<T: Real, M: Model<T>>(
    ham: &Hamiltonian<'_, T, M>,
    initial: &ManyBodyState<T>,
    sample_times: &[T],
    opts: &PropagationOptions<T>,
) -> Result<Trajectory<T>> {
    let mut states = Vec::with_capacity(sample_times.len());
    let stats = propagate_observed(ham, initial, sample_times, opts, |_, t, psi| {
        states.push(ManyBodyState { amplitudes: psi.to_vec(), time: t });
    })?;
    Ok(Trajectory { states, stats })
}

/// Propagates `initial`, calling `observe(k, t_k, ψ(t_k))` at every sample
/// time in order.
pub fn propagate_observed<T: Real, M: Model<T>, F>(
    ham: &Hamiltonian<'_, T, M>,
    initial: &ManyBodyState<T>,
    sample_times: &[T],
    opts: &PropagationOptions<T>,
    mut observe: F,
) -> Result<PropagationStats<T>>
where
    F: FnMut(usize, T, &[Amp<T>]),
{
    if initial.amplitudes.len() != ham.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has {} amplitudes, Hamiltonian acts on {}",
            initial.amplitudes.len(),
            ham.dim()
        )));
    }
    if !(opts.rtol > T::zero()) || !(opts.krylov_tol > T::zero()) || opts.krylov_dim < 2 {
        return Err(Error::InvalidArgument("tolerances must be positive and krylov_dim >= 2".into()));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times.iter().any(|&s| s < initial.time) {
        return Err(Error::InvalidArgument("sample times must be nondecreasing and not before the start".into()));
    }
    if opts.method == Method::Auto {
        if let Some(detuning) = factorizes(ham, initial) {
            return propagate_factorized(ham, initial, detuning, sample_times, opts, observe);
        }
    }
    let mut run = Run {
        ham,
        opts,
        psi: initial.amplitudes.clone(),
        t: initial.time,
        norm0: initial.norm_sqr(),
        stats: PropagationStats::default(),
        attempts: 0,
    };
    let Some(&end) = sample_times.last() else {
        return Ok(run.stats);
    };

    let mut cuts: Vec<T> = ham.pulse().breakpoints().into_iter().filter(|&b| b > run.t && b < end).collect();
    cuts.push(end);
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] <= run.t {
        observe(next_sample, run.t, &run.psi);
        next_sample += 1;
    }
    for b in cuts {
        let a = run.t;
        if b <= a {
            continue;
        }
        let mut targets: Vec<(T, Option<usize>)> = Vec::new();
        while next_sample < sample_times.len() && sample_times[next_sample] <= b {
            targets.push((sample_times[next_sample], Some(next_sample)));
            next_sample += 1;
        }
        if targets.last().map_or(true, |&(s, _)| s < b) {
            targets.push((b, None));
        }
        let constant = ham.pulse().constant_on(a, b);
        let laser_peak = ham.pulse().max_envelope_on(a, b) * ham.pulse().rabi.abs() / lit(2.0);
        let shifts = ham.spectral_bound(T::zero());
        let rotating = shifts > ham.spectral_bound(laser_peak) - shifts;
        match (opts.method, constant) {
            (Method::RungeKutta, _) => run.dopri5(&targets, &mut observe, false)?,
            (_, Some(c)) if c.norm() == T::zero() => run.free_phase(&targets, &mut observe),
            (_, Some(c)) => run.krylov_constant(c * (ham.pulse().rabi / lit(2.0)), &targets, &mut observe)?,
            (Method::Auto, None) => run.dopri5(&targets, &mut observe, rotating)?,
            (Method::Exponential, None) => run.magnus(&targets, &mut observe)?,
        }
    }
    Ok(run.stats)
}

/// A lone two-level unit.
struct TwoLevel<T: Real> {
    weight: [T; 1],
    energies: [T; 2],
}

impl<T: Real> Model<T> for TwoLevel<T> {
    fn dim(&self) -> usize {
        2
    }
    fn interaction_energies(&self) -> &[T] {
        &self.energies
    }
    fn n_units(&self) -> usize {
        1
    }
    fn state_mask(&self, index: usize) -> u64 {
        index as u64
    }
    fn weights(&self) -> &[T] {
        &self.weight
    }
    fn for_each_link(&self, index: usize, mut visit: impl FnMut(usize, usize, bool)) {
        visit(0, 1 - index, index == 0);
    }
}

/// Detuning of a Hamiltonian without interactions on a complete basis, when
/// `initial` is a multiple of the ground state. The evolution then stays a
/// product of independent units.
fn factorizes<T: Real, M: Model<T>>(ham: &Hamiltonian<'_, T, M>, initial: &ManyBodyState<T>) -> Option<T> {
    let model = ham.model();
    let n = model.n_units();
    if !(2..u64::BITS as usize).contains(&n) || model.dim() != 1usize << n {
        return None;
    }
    let mut detuning = None;
    for s in 0..model.dim() {
        let mask = model.state_mask(s);
        if mask != 0 && initial.amplitudes[s] != Complex::new(T::zero(), T::zero()) {
            return None;
        }
        if mask.count_ones() == 1 {
            detuning.get_or_insert(ham.diagonal()[s]);
        }
    }
    let d = detuning?;
    (0..model.dim())
        .all(|s| ham.diagonal()[s] == d * lit(model.excitation_number(s) as f64))
        .then_some(d)
}

fn propagate_factorized<T: Real, M: Model<T>, F>(
    ham: &Hamiltonian<'_, T, M>,
    initial: &ManyBodyState<T>,
    detuning: T,
    sample_times: &[T],
    opts: &PropagationOptions<T>,
    mut observe: F,
) -> Result<PropagationStats<T>>
where
    F: FnMut(usize, T, &[Amp<T>]),
{
    let model = ham.model();
    let ground = (0..model.dim()).find(|&s| model.state_mask(s) == 0).expect("complete basis holds the ground state");
    let c0 = initial.amplitudes[ground];
    let mut stats = PropagationStats::<T>::default();
    // One two-level run per distinct weight.
    let mut runs: Vec<(T, Trajectory<T>)> = Vec::new();
    for &w in model.weights() {
        if runs.iter().any(|(v, _)| *v == w) {
            continue;
        }
        let unit = TwoLevel { weight: [w], energies: [T::zero(); 2] };
        let h = Hamiltonian::new(&unit, *ham.pulse(), detuning);
        let tr = propagate(&h, &ManyBodyState::ground(2, initial.time), sample_times, opts)?;
        stats.steps += tr.stats.steps;
        stats.max_norm_drift = stats.max_norm_drift.max(tr.stats.max_norm_drift * c0.norm_sqr());
        runs.push((w, tr));
    }
    // Units sharing a weight evolve identically, so an amplitude only
    // depends on how many units of each weight class are excited.
    let classes: Vec<u64> = runs
        .iter()
        .map(|(v, _)| model.weights().iter().enumerate().filter(|(_, w)| *w == v).fold(0u64, |m, (i, _)| m | 1 << i))
        .collect();
    let mut psi = zeros::<T>(model.dim());
    for (k, &t) in sample_times.iter().enumerate() {
        // tables[c][m]: product over class c with m of its units excited.
        let tables: Vec<Vec<Amp<T>>> = runs
            .iter()
            .zip(&classes)
            .map(|((_, tr), &mask)| {
                let a = &tr.states[k].amplitudes;
                let size = mask.count_ones() as usize;
                (0..=size).map(|m| a[0].powu((size - m) as u32) * a[1].powu(m as u32)).collect()
            })
            .collect();
        if let [tab] = &tables[..] {
            let tab: Vec<Amp<T>> = tab.iter().map(|&a| a * c0).collect();
            for (s, c) in psi.iter_mut().enumerate() {
                *c = tab[model.state_mask(s).count_ones() as usize];
            }
        } else {
            for (s, c) in psi.iter_mut().enumerate() {
                let mask = model.state_mask(s);
                *c = tables.iter().zip(&classes).fold(c0, |acc, (tab, &cm)| acc * tab[(mask & cm).count_ones() as usize]);
            }
        }
        observe(k, t, &psi);
    }
    Ok(stats)
}

struct Run<'h, 'm, T: Real, M: Model<T>> {
    ham: &'h Hamiltonian<'m, T, M>,
    opts: &'h PropagationOptions<T>,
    psi: Vec<Amp<T>>,
    t: T,
    norm0: T,
    stats: PropagationStats<T>,
    attempts: usize,
}

fn zeros<T: Real>(n: usize) -> Vec<Amp<T>> {
    vec![Complex::new(T::zero(), T::zero()); n]
}

fn min_step<T: Real>(t: T, span: T) -> T {
    lit::<T>(64.0) * T::epsilon() * t.abs().max(span.abs()).max(T::min_positive_value())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

// Commutator-free Magnus CF4 weights.
const CF4_A1: f64 = (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_A2: f64 = (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_NODE: f64 = 1.732_050_807_568_877_2 / 6.0;

impl<'h, 'm, T: Real, M: Model<T>> Run<'h, 'm, T, M> {
    fn record_step(&mut self) {
        self.stats.steps += 1;
        let drift = (norm_sqr(&self.psi) - self.norm0).abs();
        if drift > self.stats.max_norm_drift {
            self.stats.max_norm_drift = drift;
        }
    }

    fn attempt(&mut self) -> Result<()> {
        self.attempts += 1;
        if self.attempts > self.opts.max_steps {
            return Err(Error::StepLimit { time: self.t.to_f64().unwrap_or(f64::NAN), steps: self.opts.max_steps });
        }
        Ok(())
    }

    /// Whether `exp(−iHh)` with this laser prefactor should be taken densely.
    fn use_dense(&self, laser: Complex<T>, h: T) -> bool {
        laser.im == T::zero()
            && self.psi.len() <= self.opts.dense_limit
            && self.ham.spectral_bound(laser.norm()) * h > self.opts.stiffness_limit
    }

    fn emit<F: FnMut(usize, T, &[Amp<T>])>(&self, sample: Option<usize>, observe: &mut F) {
        if let Some(k) = sample {
            observe(k, self.t, &self.psi);
        }
    }

    /// Laser off: every amplitude only picks up its diagonal phase.
    fn free_phase<F: FnMut(usize, T, &[Amp<T>])>(&mut self, targets: &[(T, Option<usize>)], observe: &mut F) {
        for &(tt, sample) in targets {
            let dt = tt - self.t;
            for (c, &e) in self.psi.iter_mut().zip(self.ham.diagonal()) {
                *c = *c * Complex::from_polar(T::one(), -e * dt);
            }
            self.t = tt;
            self.record_step();
            self.emit(sample, observe);
        }
    }

    fn krylov_constant<F: FnMut(usize, T, &[Amp<T>])>(
        &mut self,
        laser: Complex<T>,
        targets: &[(T, Option<usize>)],
        observe: &mut F,
    ) -> Result<()> {
        let end = targets.last().map(|p| p.0).unwrap_or(self.t);
        if self.use_dense(laser, end - self.t) {
            let dense = Dense::new(self.ham, T::one(), laser.re);
            let start = dense.project(&self.psi);
            let t0 = self.t;
            for &(tt, sample) in targets {
                self.psi = dense.evolve(&start, tt - t0);
                self.t = tt;
                self.record_step();
                self.emit(sample, observe);
            }
            return Ok(());
        }
        let mut next = 0;
        while self.t < end {
            self.attempt()?;
            let h_target = end - self.t;
            let op = |x: &[Amp<T>], out: &mut [Amp<T>]| self.ham.apply_parts(T::one(), laser, x, out);
            let krylov = Lanczos::build(op, &self.psi, self.opts.krylov_dim, h_target, self.opts.krylov_tol);
            let h = krylov.feasible_step(h_target, self.opts.krylov_tol);
            if h < min_step(self.t, h_target) {
                return Err(Error::StepUnderflow { time: self.t.to_f64().unwrap_or(f64::NAN) });
            }
            let reached = if h >= h_target { end } else { self.t + h };
            while next < targets.len() && targets[next].0 <= reached {
                let (tt, sample) = targets[next];
                if sample.is_some() && tt < reached {
                    let mut tmp = zeros(self.psi.len());
                    krylov.evaluate(tt - self.t, &mut tmp);
                    if let Some(k) = sample {
                        observe(k, tt, &tmp);
                    }
                }
                next += 1;
            }
            let mut out = zeros(self.psi.len());
            krylov.evaluate(reached - self.t, &mut out);
            self.psi = out;
            self.t = reached;
            self.record_step();
            // Samples that land exactly on the step end see the stepped state.
            for &(tt, sample) in targets[..next].iter().rev() {
                if tt == reached {
                    self.emit(sample, observe);
                } else {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Dormand–Prince steps. With `rotating` the state is carried in the
    /// interaction picture of the diagonal, `y = exp(iD(t − t₀)) ψ`, so only
    /// the laser term is integrated and large interaction shifts cost nothing.
    fn dopri5<F: FnMut(usize, T, &[Amp<T>])>(
        &mut self,
        targets: &[(T, Option<usize>)],
        observe: &mut F,
        rotating: bool,
    ) -> Result<()> {
        let n = self.psi.len();
        let ham = self.ham;
        let t0 = self.t;
        let mut phase = zeros(n);
        let mut buf = zeros(n);
        let mut deriv = |t: T, x: &[Amp<T>], out: &mut [Amp<T>]| {
            if !rotating {
                ham.derivative(t, x, out);
                return;
            }
            let dt = t - t0;
            for ((p, b), (&e, &xi)) in phase.iter_mut().zip(buf.iter_mut()).zip(ham.diagonal().iter().zip(x)) {
                *p = Complex::from_polar(T::one(), e * dt);
                *b = xi * p.conj();
            }
            ham.apply_parts(T::zero(), ham.laser_coupling(t), &buf, out);
            for (o, p) in out.iter_mut().zip(&phase) {
                *o = Complex::new(o.im, -o.re) * *p;
            }
        };
        let to_schrodinger = |t: T, y: &[Amp<T>]| -> Vec<Amp<T>> {
            let dt = t - t0;
            y.iter().zip(ham.diagonal()).map(|(c, &e)| *c * Complex::from_polar(T::one(), -e * dt)).collect()
        };
        let mut k: Vec<Vec<Amp<T>>> = (0..7).map(|_| zeros(n)).collect();
        let mut stage = zeros(n);
        let mut y_new = zeros(n);
        let (rtol, atol) = (self.opts.rtol, self.opts.atol);
        let end = targets.last().map(|p| p.0).unwrap_or(self.t);
        let laser = ham.pulse().max_envelope_on(self.t, end) * ham.pulse().rabi.abs() / lit(2.0);
        let rho = if rotating { ham.spectral_bound(laser) - ham.spectral_bound(T::zero()) } else { ham.spectral_bound(laser) };
        let mut h = (lit::<T>(0.5) * rtol.powf(lit(0.2)) / rho.max(T::min_positive_value())).min(end - self.t);
        // First-same-as-last: k[0] always holds f(t, y) at the current point.
        deriv(self.t, &self.psi, &mut k[0]);
        for &(tt, sample) in targets {
            while self.t < tt {
                self.attempt()?;
                let span = tt - self.t;
                let last = h >= span;
                let step = if last { span } else { h };
                for s in 1..7 {
                    for (i, v) in stage.iter_mut().enumerate() {
                        let mut acc = Complex::new(T::zero(), T::zero());
                        for (j, kj) in k.iter().enumerate().take(s) {
                            let a = A[s][j];
                            if a != 0.0 {
                                acc += kj[i] * lit::<T>(a);
                            }
                        }
                        *v = self.psi[i] + acc * step;
                    }
                    let ts = self.t + step * lit(C[s]);
                    deriv(ts, &stage, &mut k[s]);
                }
                // Stage 7 is evaluated at the fifth-order solution.
                y_new.copy_from_slice(&stage);
                let mut err_sq = T::zero();
                for i in 0..n {
                    let mut e = Complex::new(T::zero(), T::zero());
                    for (j, kj) in k.iter().enumerate() {
                        if E[j] != 0.0 {
                            e += kj[i] * lit::<T>(E[j]);
                        }
                    }
                    err_sq += (e * step).norm_sqr();
                }
                let scale = atol + rtol * norm_sqr(&self.psi).sqrt().max(norm_sqr(&y_new).sqrt());
                let err = err_sq.sqrt() / scale;
                if err <= T::one() {
                    std::mem::swap(&mut self.psi, &mut y_new);
                    self.t = if last { tt } else { self.t + step };
                    self.record_step();
                    k.swap(0, 6);
                    let grow = if err == T::zero() { lit(5.0) } else { lit::<T>(0.9) * err.powf(lit(-0.2)) };
                    if !last {
                        h = step * grow.min(lit(5.0)).max(lit(0.2));
                    }
                } else {
                    h = step * (lit::<T>(0.9) * err.powf(lit(-0.2))).max(lit(0.1));
                    if h < min_step(self.t, span) {
                        return Err(Error::StepUnderflow { time: self.t.to_f64().unwrap_or(f64::NAN) });
                    }
                }
            }
            if let Some(kk) = sample {
                if rotating {
                    observe(kk, self.t, &to_schrodinger(self.t, &self.psi));
                } else {
                    observe(kk, self.t, &self.psi);
                }
            }
        }
        if rotating {
            self.psi = to_schrodinger(self.t, &self.psi);
        }
        Ok(())
    }

    /// One CF4 step of size `h`; `None` if a Lanczos exponential could not
    /// cover `h` within tolerance.
    fn cf4_step(&self, psi: &[Amp<T>], t: T, h: T) -> Option<Vec<Amp<T>>> {
        let half = lit::<T>(0.5);
        let c1 = self.ham.laser_coupling(t + h * (half - lit(CF4_NODE)));
        let c2 = self.ham.laser_coupling(t + h * (half + lit(CF4_NODE)));
        let (a1, a2) = (lit::<T>(CF4_A1), lit::<T>(CF4_A2));
        let mut current = psi.to_vec();
        for laser in [c1 * a2 + c2 * a1, c1 * a1 + c2 * a2] {
            if self.use_dense(laser, h) {
                let dense = Dense::new(self.ham, half, laser.re);
                current = dense.evolve(&dense.project(&current), h);
                continue;
            }
            let op = |x: &[Amp<T>], out: &mut [Amp<T>]| self.ham.apply_parts(half, laser, x, out);
            let krylov = Lanczos::build(op, &current, self.opts.krylov_dim, h, self.opts.krylov_tol);
            if krylov.error(h) > self.opts.krylov_tol {
                return None;
            }
            let mut out = zeros(current.len());
            krylov.evaluate(h, &mut out);
            current = out;
        }
        Some(current)
    }

    fn magnus<F: FnMut(usize, T, &[Amp<T>])>(&mut self, targets: &[(T, Option<usize>)], observe: &mut F) -> Result<()> {
        let end = targets.last().map(|p| p.0).unwrap_or(self.t);
        let mut h = (end - self.t) / lit(16.0);
        let tol = self.opts.rtol;
        for &(tt, sample) in targets {
            while self.t < tt {
                self.attempt()?;
                let span = tt - self.t;
                let last = h >= span;
                let step = if last { span } else { h };
                if step < min_step(self.t, span) {
                    return Err(Error::StepUnderflow { time: self.t.to_f64().unwrap_or(f64::NAN) });
                }
                let half = step / lit(2.0);
                let attempt = self.cf4_step(&self.psi, self.t, step).and_then(|big| {
                    let mid = self.cf4_step(&self.psi, self.t, half)?;
                    let small = self.cf4_step(&mid, self.t + half, half)?;
                    Some((big, small))
                });
                let Some((big, small)) = attempt else {
                    h = step / lit(2.0);
                    continue;
                };
                let diff: T = big.iter().zip(&small).map(|(a, b)| (a - b).norm_sqr()).sum::<T>().sqrt();
                let err = diff / lit(15.0) / (self.opts.atol + tol * norm_sqr(&self.psi).sqrt());
                let factor = if err == T::zero() { lit(4.0) } else { lit::<T>(0.9) * err.powf(lit(-0.2)) };
                if err <= T::one() {
                    self.psi = small;
                    self.t = if last { tt } else { self.t + step };
                    self.record_step();
                    if !last {
                        h = step * factor.min(lit(4.0));
                    }
                } else {
                    h = step * factor.max(lit(0.2));
                }
            }
            self.emit(sample, observe);
        }
        Ok(())
    }
}

/// Eigen-decomposition of a real Hamiltonian `scale·D + c (L⁺ + L⁻)`.
struct Dense<T: Real> {
    n: usize,
    vals: Vec<T>,
    /// Eigenvector `k` is row `k`.
    vecs: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn new<M: Model<T>>(ham: &Hamiltonian<'_, T, M>, diag_scale: T, c: T) -> Self {
        let n = ham.dim();
        let weights = ham.model().weights();
        let mut a = vec![T::zero(); n * n];
        for s in 0..n {
            a[s * n + s] = ham.diagonal()[s] * diag_scale;
            ham.model().for_each_link(s, |i, j, _| a[s * n + j] = c * weights[i]);
        }
        let (vals, vecs) = symmetric_eigen(a, n).expect("symmetric eigen-decomposition converged");
        Self { n, vals, vecs }
    }

    /// Components `Vᵀψ` in the eigenbasis.
    fn project(&self, psi: &[Amp<T>]) -> Vec<Amp<T>> {
        self.vecs.chunks_exact(self.n).map(|row| row.iter().zip(psi).map(|(&v, p)| p * v).sum()).collect()
    }

    fn evolve(&self, y: &[Amp<T>], h: T) -> Vec<Amp<T>> {
        let mut out = zeros(self.n);
        for ((row, c), &l) in self.vecs.chunks_exact(self.n).zip(y).zip(&self.vals) {
            let c = c * Complex::from_polar(T::one(), -l * h);
            for (o, &v) in out.iter_mut().zip(row) {
                *o += c * v;
            }
        }
        out
    }
}

/// Lanczos basis of `H` started from `v`, ready to evaluate `exp(−iHh) v`.
struct Lanczos<T: Real> {
    basis: Vec<Vec<Amp<T>>>,
    eigvals: Vec<T>,
    /// Row-major eigenvectors of the projected tridiagonal matrix.
    eigvecs: Vec<T>,
    beta0: T,
    residual: T,
    exact: bool,
}

impl<T: Real> Lanczos<T> {
    fn build(op: impl Fn(&[Amp<T>], &mut [Amp<T>]), v: &[Amp<T>], m_max: usize, h_target: T, tol: T) -> Self {
        let n = v.len();
        let m_max = m_max.min(n).max(1);
        let beta0 = norm_sqr(v).sqrt();
        let mut basis: Vec<Vec<Amp<T>>> = Vec::with_capacity(m_max);
        let mut alpha: Vec<T> = Vec::with_capacity(m_max);
        let mut beta: Vec<T> = Vec::with_capacity(m_max);
        if beta0 == T::zero() {
            return Self { basis, eigvals: vec![], eigvecs: vec![], beta0, residual: T::zero(), exact: true };
        }
        basis.push(v.iter().map(|c| c / beta0).collect());
        let mut w = zeros(n);
        let mut scale = T::zero();
        let mut exact = false;
        let mut residual;
        let mut decomposition: Option<(Vec<T>, Vec<T>)> = None;
        loop {
            let j = basis.len() - 1;
            op(&basis[j], &mut w);
            let a: T = basis[j].iter().zip(&w).map(|(u, x)| (u.conj() * x).re).sum();
            alpha.push(a);
            // Full reorthogonalisation, applied twice for stability.
            for _ in 0..2 {
                for q in &basis {
                    let proj: Complex<T> = q.iter().zip(&w).map(|(u, x)| u.conj() * x).sum();
                    for (x, u) in w.iter_mut().zip(q) {
                        *x -= u * proj;
                    }
                }
            }
            let b = norm_sqr(&w).sqrt();
            scale = scale.max(a.abs()).max(b);
            residual = b;
            let m = basis.len();
            if b <= lit::<T>(1e-13) * scale.max(T::min_positive_value()) || m == n {
                exact = true;
                break;
            }
            let check = m >= m_max || (m >= 6 && m % 4 == 2);
            if check {
                let dec = symmetric_tridiagonal_eigen(&alpha, &beta).expect("tridiagonal eigen converged");
                let err = Self::estimate(&dec.0, &dec.1, m, beta0, b, h_target);
                decomposition = Some(dec);
                if err <= tol || m >= m_max {
                    break;
                }
            }
            beta.push(b);
            basis.push(w.iter().map(|c| c / b).collect());
            decomposition = None;
        }
        let m = basis.len();
        let (eigvals, eigvecs) = match decomposition {
            Some(d) if d.0.len() == m => d,
            _ => symmetric_tridiagonal_eigen(&alpha, &beta).expect("tridiagonal eigen converged"),
        };
        Self { basis, eigvals, eigvecs, beta0, residual, exact }
    }

    fn estimate(vals: &[T], vecs: &[T], m: usize, beta0: T, residual: T, h: T) -> T {
        let mut last = Complex::new(T::zero(), T::zero());
        for k in 0..m {
            last += Complex::from_polar(T::one(), -vals[k] * h) * (vecs[(m - 1) * m + k] * vecs[k]);
        }
        beta0 * residual * last.norm()
    }

    fn error(&self, h: T) -> T {
        if self.exact || self.basis.is_empty() {
            return T::zero();
        }
        Self::estimate(&self.eigvals, &self.eigvecs, self.basis.len(), self.beta0, self.residual, h)
    }

    /// Largest `h ≤ h_max` (up to a safety factor) meeting the tolerance.
    fn feasible_step(&self, h_max: T, tol: T) -> T {
        let mut h = h_max;
        let m = self.basis.len().max(2);
        for _ in 0..200 {
            let err = self.error(h);
            if err <= tol {
                return h;
            }
            let ratio = (tol / err).powf(T::one() / lit((m - 1) as f64));
            h = h * (lit::<T>(0.9) * ratio).min(lit(0.9)).max(lit(0.1));
        }
        T::zero()
    }

    fn evaluate(&self, h: T, out: &mut [Amp<T>]) {
        for x in out.iter_mut() {
            *x = Complex::new(T::zero(), T::zero());
        }
        let m = self.basis.len();
        for j in 0..m {
            let mut coeff = Complex::new(T::zero(), T::zero());
            for k in 0..m {
                coeff += Complex::from_polar(T::one(), -self.eigvals[k] * h) * (self.eigvecs[j * m + k] * self.eigvecs[k]);
            }
            coeff = coeff * self.beta0;
            for (x, q) in out.iter_mut().zip(&self.basis[j]) {
                *x += q * coeff;
            }
        }
    }
}
