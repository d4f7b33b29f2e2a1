use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use super::config::SimConfig;
use super::record::{BlockDiagnostics, ParticleEnsemble, PathRecord};
use crate::model::{norm_sq, MeasureView, ModelSpec};
use crate::rng::{NoiseStream, Source};
use crate::variational::ControlPair;
use crate::{Error, Result};

/// Deterministic path evaluated on demand, e.g. an averaged solution.
pub trait ReferencePath: Sync {
    fn state_at(&self, t: f64, out: &mut [f64]);
}

/// Which grid steps end up in [`PathRecord::ensembles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    /// About a hundred evenly spaced snapshots.
    #[default]
    Auto,
    /// Every `k`-th grid step.
    Every(usize),
    /// Only `t = 0` and `t = T`.
    Endpoints,
}

/// Knobs beyond [`SimConfig`] shared by all entry points.
#[derive(Clone, Copy)]
pub struct SimOptions<'a> {
    pub recording: Recording,
    /// Track `sup_t |X_t - reference(t)|^2` per particle.
    pub reference: Option<&'a dyn ReferencePath>,
    /// Run the frozen-block auxiliary pair with this window.
    pub block: Option<f64>,
    /// Keep the `sigma2 psi / sqrt(eps delta)` term in the controlled fast equation.
    pub fast_control: bool,
    /// Added to particle indices when deriving noise streams, so batches stay independent.
    pub particle_offset: u64,
}

impl Default for SimOptions<'_> {
    fn default() -> Self {
        Self {
            recording: Recording::Auto,
            reference: None,
            block: None,
            fast_control: true,
            particle_offset: 0,
        }
    }
}

/// Runs the uncontrolled system.
pub fn simulate_coupled(spec: &ModelSpec, cfg: &SimConfig) -> Result<PathRecord> {
    simulate(spec, cfg, None, &SimOptions::default())
}

/// Runs the controlled system; the law argument is that of the uncontrolled system.
pub fn simulate_controlled(spec: &ModelSpec, cfg: &SimConfig, control: &ControlPair) -> Result<PathRecord> {
    simulate(spec, cfg, Some(control), &SimOptions::default())
}

/// Jump times with exponential gaps at rate `rate_scale * lambda` on `[0, horizon)`, with marks.
pub fn sample_compound_poisson(
    levy: &crate::model::LevyMeasureSpec,
    rate_scale: f64,
    horizon: f64,
    stream: &mut NoiseStream,
) -> Vec<(f64, f64)> {
    let rate = rate_scale * levy.total_rate;
    let mut out = Vec::new();
    if !(rate > 0.0) || !(horizon > 0.0) {
        return out;
    }
    let mut t = 0.0;
    loop {
        let gap: f64 = Exp1.sample(stream);
        t += gap / rate;
        if t >= horizon {
            return out;
        }
        out.push((t, levy.sample_mark(stream)));
    }
}

struct Aux {
    x: Vec<f64>,
    y: Vec<f64>,
    anchor: Vec<f64>,
    gap_integral: f64,
    gap_sup: f64,
}

struct Particle {
    x: Vec<f64>,
    y: Vec<f64>,
    brownian: NoiseStream,
    jumps: NoiseStream,
    marks: NoiseStream,
    thinning: NoiseStream,
    next_jump: f64,
    accepted: u32,
    sup_sq: f64,
    ref_sup_sq: f64,
    fast_energy: f64,
    psi_dw: f64,
    psi_sq_dt: f64,
    log_phi: f64,
    aux: Option<Aux>,
}

struct Scratch {
    b1: Vec<f64>,
    b2: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    comp: Vec<f64>,
    g: Vec<f64>,
    dw: Vec<f64>,
    reference: Vec<f64>,
    aux_b1: Vec<f64>,
    aux_b2: Vec<f64>,
    aux_s2: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, m: usize, d: usize) -> Self {
        Self {
            b1: vec![0.0; n],
            b2: vec![0.0; m],
            s1: vec![0.0; n * d],
            s2: vec![0.0; m * d],
            comp: vec![0.0; n],
            g: vec![0.0; n],
            dw: vec![0.0; d],
            reference: vec![0.0; n],
            aux_b1: vec![0.0; n],
            aux_b2: vec![0.0; m],
            aux_s2: vec![0.0; m * d],
        }
    }
}

struct Ctx<'a> {
    spec: &'a ModelSpec,
    epsilon: f64,
    delta: f64,
    sqrt_eps: f64,
    sqrt_delta: f64,
    control: Option<&'a ControlPair>,
    phi_max: f64,
    /// Dominating jump rate `phi_max * lambda / eps`.
    rate: f64,
    fast_control: bool,
    stencil: &'a [f64],
    reference: Option<&'a dyn ReferencePath>,
}

impl Ctx<'_> {
    fn gap(&self, stream: &mut NoiseStream) -> f64 {
        if self.rate > 0.0 {
            let e: f64 = Exp1.sample(stream);
            e / self.rate
        } else {
            f64::INFINITY
        }
    }

    fn new_particle(&self, cfg: &SimConfig, id: u64, with_aux: bool) -> Particle {
        let stream = |s| NoiseStream::for_particle(cfg.seed, id, s);
        let mut jumps = stream(Source::JumpTimes);
        let next_jump = self.gap(&mut jumps);
        Particle {
            x: cfg.x0.clone(),
            y: cfg.y0.clone(),
            brownian: stream(Source::Brownian),
            jumps,
            marks: stream(Source::Marks),
            thinning: stream(Source::Thinning),
            next_jump,
            accepted: 0,
            sup_sq: norm_sq(&cfg.x0),
            ref_sup_sq: 0.0,
            fast_energy: 0.0,
            psi_dw: 0.0,
            psi_sq_dt: 0.0,
            log_phi: 0.0,
            aux: with_aux.then(|| Aux {
                x: cfg.x0.clone(),
                y: cfg.y0.clone(),
                anchor: cfg.x0.clone(),
                gap_integral: 0.0,
                gap_sup: 0.0,
            }),
        }
    }

    /// Advances one particle over `[t0, t1]`, splitting at its jump times.
    /// Returns the time of the first non-finite state, if any.
    fn advance(
        &self,
        p: &mut Particle,
        mu: &MeasureView,
        aux_mu: Option<&MeasureView>,
        t0: f64,
        t1: f64,
        s: &mut Scratch,
    ) -> std::result::Result<(), f64> {
        let mut t = t0;
        while p.next_jump < t1 {
            let tau = p.next_jump;
            if tau > t {
                self.euler(p, mu, aux_mu, t, tau - t, s);
                t = tau;
                self.track(p, t, s)?;
            }
            self.jump(p, mu, tau, s);
            p.next_jump = tau + self.gap(&mut p.jumps);
            self.track(p, t, s)?;
        }
        if t1 > t {
            self.euler(p, mu, aux_mu, t, t1 - t, s);
            self.track(p, t1, s)?;
        }
        Ok(())
    }

    fn track(&self, p: &mut Particle, t: f64, s: &mut Scratch) -> std::result::Result<(), f64> {
        if p.x.iter().chain(&p.y).any(|v| !v.is_finite()) {
            return Err(t);
        }
        p.sup_sq = p.sup_sq.max(norm_sq(&p.x));
        if let Some(r) = self.reference {
            r.state_at(t, &mut s.reference);
            let d: f64 = p.x.iter().zip(&s.reference).map(|(a, b)| (a - b) * (a - b)).sum();
            p.ref_sup_sq = p.ref_sup_sq.max(d);
        }
        if let Some(a) = &mut p.aux {
            let d: f64 = p.x.iter().zip(&a.x).map(|(u, v)| (u - v) * (u - v)).sum();
            a.gap_sup = a.gap_sup.max(d);
        }
        Ok(())
    }

    fn jump(&self, p: &mut Particle, mu: &MeasureView, tau: f64, s: &mut Scratch) {
        let mut log_phi = 0.0;
        if let Some(c) = self.control {
            let phi = c.phi.at(tau)[0];
            let u: f64 = p.thinning.random();
            if u >= phi / self.phi_max {
                return;
            }
            log_phi = phi.ln();
        }
        let z = self.spec.levy.sample_mark(&mut p.marks);
        (self.spec.g)(tau, &p.x, mu, z, &mut s.g);
        for (x, g) in p.x.iter_mut().zip(&s.g) {
            *x += self.epsilon * g;
        }
        p.accepted += 1;
        p.log_phi += log_phi;
    }

    fn euler(&self, p: &mut Particle, mu: &MeasureView, aux_mu: Option<&MeasureView>, t: f64, h: f64, s: &mut Scratch) {
        let spec = self.spec;
        let d = spec.dim_noise;
        let root_h = h.sqrt();
        for w in s.dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut p.brownian);
            *w = root_h * z;
        }
        (spec.b1)(&p.x, mu, &p.y, &mut s.b1);
        (spec.sigma1)(&p.x, mu, &mut s.s1);
        spec.compensator(t, &p.x, mu, self.stencil, &mut s.comp);
        (spec.b2)(&p.x, mu, &p.y, &mut s.b2);
        (spec.sigma2)(&p.x, mu, &p.y, &mut s.s2);
        let psi = self
            .control
            .map(|c| c.psi.at(t))
            .filter(|psi| psi.iter().any(|v| *v != 0.0));

        p.fast_energy += norm_sq(&p.y) * h;

        if let Some(a) = &mut p.aux {
            let amu = aux_mu.expect("block measure set with auxiliary state");
            let gap: f64 = p.y.iter().zip(&a.y).map(|(u, v)| (u - v) * (u - v)).sum();
            a.gap_integral += gap * h;
            (spec.b1)(&a.anchor, amu, &a.y, &mut s.aux_b1);
            (spec.b2)(&a.anchor, amu, &a.y, &mut s.aux_b2);
            (spec.sigma2)(&a.anchor, amu, &a.y, &mut s.aux_s2);
            for (x, b) in a.x.iter_mut().zip(&s.aux_b1) {
                *x += b * h;
            }
            for (j, y) in a.y.iter_mut().enumerate() {
                let noise: f64 = (0..d).map(|k| s.aux_s2[j * d + k] * s.dw[k]).sum();
                *y += s.aux_b2[j] * h / self.delta + noise / self.sqrt_delta;
            }
        }

        for (i, x) in p.x.iter_mut().enumerate() {
            let noise: f64 = (0..d).map(|k| s.s1[i * d + k] * s.dw[k]).sum();
            *x += (s.b1[i] - s.comp[i]) * h + self.sqrt_eps * noise;
        }
        for (j, y) in p.y.iter_mut().enumerate() {
            let noise: f64 = (0..d).map(|k| s.s2[j * d + k] * s.dw[k]).sum();
            *y += s.b2[j] * h / self.delta + noise / self.sqrt_delta;
        }
        if let Some(psi) = psi {
            for (i, x) in p.x.iter_mut().enumerate() {
                let shift: f64 = (0..d).map(|k| s.s1[i * d + k] * psi[k]).sum();
                *x += shift * h;
            }
            if self.fast_control {
                let scale = h / (self.epsilon * self.delta).sqrt();
                for (j, y) in p.y.iter_mut().enumerate() {
                    let shift: f64 = (0..d).map(|k| s.s2[j * d + k] * psi[k]).sum();
                    *y += shift * scale;
                }
            }
            p.psi_dw += psi.iter().zip(&s.dw).map(|(a, b)| a * b).sum::<f64>();
            p.psi_sq_dt += norm_sq(psi) * h;
        }
    }
}

fn check_control(spec: &ModelSpec, cfg: &SimConfig, control: &ControlPair) -> Result<()> {
    control.validate()?;
    if control.psi.dim() != spec.dim_noise {
        return Err(Error::InvalidControl(format!(
            "psi has dimension {}, the model has {} noise components",
            control.psi.dim(),
            spec.dim_noise
        )));
    }
    if control.t_end() < cfg.t_end * (1.0 - 1e-9) {
        return Err(Error::InvalidControl(format!(
            "control covers [0, {}] but the horizon is {}",
            control.t_end(),
            cfg.t_end
        )));
    }
    Ok(())
}

fn gather(particles: &[Particle], out: &mut Vec<f64>) {
    out.clear();
    for p in particles {
        out.extend_from_slice(&p.x);
    }
}

fn snapshot(particles: &[Particle], time: f64, n: usize, m: usize) -> ParticleEnsemble {
    let mut slow = Vec::with_capacity(particles.len() * n);
    let mut fast = Vec::with_capacity(particles.len() * m);
    for p in particles {
        slow.extend_from_slice(&p.x);
        fast.extend_from_slice(&p.y);
    }
    ParticleEnsemble {
        time,
        dim_slow: n,
        dim_fast: m,
        slow,
        fast,
    }
}

fn mean_jumps(particles: &[Particle]) -> f64 {
    particles.iter().map(|p| p.accepted as f64).sum::<f64>() / particles.len() as f64
}

/// Advances every particle over one grid step; reports the lowest failing index.
fn step_all(
    ctx: &Ctx,
    particles: &mut [Particle],
    mu: &MeasureView,
    aux_mu: Option<&MeasureView>,
    t0: f64,
    t1: f64,
) -> Result<()> {
    let spec = ctx.spec;
    let failure = particles
        .par_iter_mut()
        .enumerate()
        .map_init(
            || Scratch::new(spec.dim_slow, spec.dim_fast, spec.dim_noise),
            |s, (i, p)| ctx.advance(p, mu, aux_mu, t0, t1, s).err().map(|t| (i, t)),
        )
        .flatten()
        .min_by(|a, b| a.0.cmp(&b.0));
    match failure {
        Some((particle, time)) => Err(Error::BlowUp { particle, time }),
        None => Ok(()),
    }
}

/// Shared engine behind [`simulate_coupled`] and [`simulate_controlled`].
///
/// The law argument at each step is the empirical slow marginal of the
/// previous step. With a non-null control on a law-dependent model, an
/// uncontrolled ensemble with the same noise is advanced alongside and
/// supplies the law instead.
pub fn simulate(
    spec: &ModelSpec,
    cfg: &SimConfig,
    control: Option<&ControlPair>,
    opts: &SimOptions,
) -> Result<PathRecord> {
    spec.validate()?;
    cfg.validate()?;
    if cfg.x0.len() != spec.dim_slow {
        return Err(Error::UnsupportedDimension {
            expected: spec.dim_slow,
            found: cfg.x0.len(),
        });
    }
    if cfg.y0.len() != spec.dim_fast {
        return Err(Error::UnsupportedDimension {
            expected: spec.dim_fast,
            found: cfg.y0.len(),
        });
    }
    if let Some(c) = control {
        check_control(spec, cfg, c)?;
    }
    if let Some(w) = opts.block {
        if !(w > 0.0 && w <= cfg.t_end) {
            return Err(Error::InvalidWindow { window: w, t_end: cfg.t_end });
        }
    }

    let (n, m) = (spec.dim_slow, spec.dim_fast);
    let k_steps = cfg.n_steps();
    let h = cfg.step();
    let every = match opts.recording {
        Recording::Auto => (k_steps / 100).max(1),
        Recording::Every(k) => k.max(1),
        Recording::Endpoints => k_steps,
    };
    let stencil = if spec.has_jumps() && spec.jump_mean.is_none() {
        spec.mark_stencil()
    } else {
        Vec::new()
    };
    let phi_max = control.map_or(1.0, |c| c.phi.max_value());
    let ctx = Ctx {
        spec,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        sqrt_eps: cfg.epsilon.sqrt(),
        sqrt_delta: cfg.delta.sqrt(),
        control,
        phi_max,
        rate: phi_max * spec.levy.total_rate / cfg.epsilon,
        fast_control: opts.fast_control,
        stencil: &stencil,
        reference: opts.reference,
    };
    let co_simulate = spec.law_dependent && control.is_some_and(|c| !c.is_null());
    let ref_ctx = Ctx {
        control: None,
        phi_max: 1.0,
        rate: spec.levy.total_rate / cfg.epsilon,
        reference: None,
        ..ctx
    };

    let id = |i: usize| opts.particle_offset + i as u64;
    let mut particles: Vec<Particle> = (0..cfg.n_particles)
        .map(|i| ctx.new_particle(cfg, id(i), opts.block.is_some()))
        .collect();
    let mut shadow: Vec<Particle> = if co_simulate {
        (0..cfg.n_particles).map(|i| ref_ctx.new_particle(cfg, id(i), false)).collect()
    } else {
        Vec::new()
    };
    if let Some(r) = opts.reference {
        let mut buf = vec![0.0; n];
        r.state_at(0.0, &mut buf);
        let d: f64 = cfg.x0.iter().zip(&buf).map(|(a, b)| (a - b) * (a - b)).sum();
        particles.iter_mut().for_each(|p| p.ref_sup_sq = d);
    }

    let mut times = vec![0.0];
    let mut ensembles = vec![snapshot(&particles, 0.0, n, m)];
    let mut jumps_recorded = vec![0.0];
    let mut law_buf = Vec::with_capacity(cfg.n_particles * n);
    let mut block_index = usize::MAX;
    let mut block_mu: Option<MeasureView<'static>> = None;

    for k in 0..k_steps {
        let t0 = k as f64 * h;
        let t1 = if k + 1 == k_steps { cfg.t_end } else { (k + 1) as f64 * h };
        gather(if co_simulate { &shadow } else { &particles }, &mut law_buf);
        let mu = MeasureView::uniform(n, &law_buf);
        if let Some(w) = opts.block {
            let b = (t0 / w + 1e-9).floor() as usize;
            if b != block_index {
                block_index = b;
                block_mu = Some(mu.clone().into_owned());
                for p in particles.iter_mut() {
                    let a = p.aux.as_mut().expect("auxiliary state allocated");
                    a.anchor.copy_from_slice(&p.x);
                }
            }
        }
        if co_simulate {
            step_all(&ref_ctx, &mut shadow, &mu, None, t0, t1)?;
        }
        step_all(&ctx, &mut particles, &mu, block_mu.as_ref(), t0, t1)?;
        if (k + 1) % every == 0 || k + 1 == k_steps {
            times.push(t1);
            ensembles.push(snapshot(&particles, t1, n, m));
            jumps_recorded.push(mean_jumps(&particles));
        }
    }

    let log_weights = control.map(|c| {
        let lambda = spec.levy.total_rate;
        let tilt: f64 = (0..c.phi.intervals())
            .map(|i| {
                let a = c.phi.edges()[i].min(cfg.t_end);
                let b = c.phi.edges()[i + 1].min(cfg.t_end);
                (c.phi.value(i)[0] - 1.0) * (b - a)
            })
            .sum();
        let jump_term = if lambda > 0.0 { lambda / cfg.epsilon * tilt } else { 0.0 };
        particles
            .iter()
            .map(|p| {
                -p.psi_dw / ctx.sqrt_eps - p.psi_sq_dt / (2.0 * cfg.epsilon) - p.log_phi + jump_term
            })
            .collect()
    });
    let block = opts.block.map(|window| BlockDiagnostics {
        window,
        fast_gap_integral: particles.iter().map(|p| p.aux.as_ref().unwrap().gap_integral).collect(),
        slow_gap_sup: particles.iter().map(|p| p.aux.as_ref().unwrap().gap_sup).collect(),
    });

    Ok(PathRecord {
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        step: h,
        seed: cfg.seed,
        times,
        ensembles,
        mean_jumps: jumps_recorded,
        sup_sq: particles.iter().map(|p| p.sup_sq).collect(),
        reference_sup_sq: opts
            .reference
            .map(|_| particles.iter().map(|p| p.ref_sup_sq).collect()),
        fast_energy: particles.iter().map(|p| p.fast_energy).collect(),
        jump_counts: particles.iter().map(|p| p.accepted).collect(),
        log_weights,
        block,
    })
}
