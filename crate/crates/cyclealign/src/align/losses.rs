//! The four objectives: dynamics cycle, domain cycle, and the adversarial
//! terms for G, H, and P, plus the weighted combination with its per-term
//! breakdown.
//!
//! Tape builders take explicit trainability flags; a network that is frozen
//! for the current phase is evaluated by value and re-enters the tape as a
//! constant, so no gradient can reach it.

use super::{AlignmentModel, NET_G, NET_H, NET_P};
use crate::data::TransitionTriple;
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::nn::{gan_losses, MlpParams, NetKey, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    DynCyc,
    AdvH,
    AdvP,
    DomCyc,
    AdvG,
}

impl LossTerm {
    pub fn name(self) -> &'static str {
        match self {
            LossTerm::DynCyc => "dyn_cyc",
            LossTerm::AdvH => "adv_h",
            LossTerm::AdvP => "adv_p",
            LossTerm::DomCyc => "dom_cyc",
            LossTerm::AdvG => "adv_g",
        }
    }
}

/// Weighted contributions of the active terms; entries for zero-weighted
/// terms are absent.
#[derive(Debug, Clone, Default)]
pub struct LossBreakdown {
    pub terms: Vec<(LossTerm, f64)>,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|(_, v)| v).sum()
    }

    pub fn get(&self, term: LossTerm) -> Option<f64> {
        self.terms
            .iter()
            .find(|(t, _)| *t == term)
            .map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lambdas {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
}

fn eval_g<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    obs: &[f64],
    trainable: bool,
) -> Result<Var> {
    match &model.g {
        None => Ok(tape.leaf(obs.to_vec())),
        Some(g) if trainable => {
            let x = tape.leaf(obs.to_vec());
            tape.mlp(g, x, Some(NET_G))
        }
        Some(g) => Ok(tape.leaf(g.forward(obs)?)),
    }
}

fn eval_h<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    obs: &[f64],
    act: &[f64],
    trainable: bool,
) -> Result<Var> {
    match &model.h {
        None => Ok(tape.leaf(act.to_vec())),
        Some(h) => {
            let mut input = obs.to_vec();
            input.extend_from_slice(act);
            if trainable {
                let x = tape.leaf(input);
                tape.mlp(h, x, Some(NET_H))
            } else {
                Ok(tape.leaf(h.forward(&input)?))
            }
        }
    }
}

fn eval_p_var<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    y: Var,
    u: Var,
    trainable: bool,
) -> Result<Var> {
    match &model.p {
        None => Ok(u),
        Some(p) => {
            let input = tape.concat(y, u);
            tape.mlp(p, input, if trainable { Some(NET_P) } else { None })
        }
    }
}

/// Frozen discriminator evaluation: gradient flows through to the fake
/// sample, the discriminator itself stays fixed.
fn disc_logit_frozen<'p>(tape: &mut Tape<'p>, d: &'p MlpParams, x: Var) -> Result<Var> {
    tape.mlp(d, x, None)
}

pub(crate) fn dynamics_cycle_on_tape<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    f: &'p ForwardModel,
    batch_x: &[&TransitionTriple],
    g_trainable: bool,
    hp_trainable: bool,
) -> Result<Var> {
    if batch_x.is_empty() {
        return Err(Error::EmptyBatch("dynamics_cycle_loss"));
    }
    if !f.frozen() {
        return Err(Error::NotFrozen);
    }
    let mut terms = Vec::with_capacity(batch_x.len());
    for t in batch_x {
        let gx = eval_g(tape, model, &t.obs, g_trainable)?;
        let gx_next = eval_g(tape, model, &t.obs_next, g_trainable)?;
        let u = eval_h(tape, model, &t.obs, &t.action, hp_trainable)?;
        let pred = f.predict_on_tape(tape, gx, u)?;
        terms.push(tape.l1(gx_next, pred));
    }
    Ok(tape.mean(&terms))
}

pub(crate) fn domain_cycle_on_tape<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    batch_x: &[&TransitionTriple],
    hp_trainable: bool,
) -> Result<Var> {
    if batch_x.is_empty() {
        return Err(Error::EmptyBatch("domain_cycle_loss"));
    }
    let mut terms = Vec::with_capacity(batch_x.len());
    for t in batch_x {
        // y for P: the shared observation when G is bypassed, otherwise G(x)
        // detached so the domain cycle never trains G
        let y = match &model.g {
            None => tape.leaf(t.obs.clone()),
            Some(g) => tape.leaf(g.forward(&t.obs)?),
        };
        let u = eval_h(tape, model, &t.obs, &t.action, hp_trainable)?;
        let a_hat = eval_p_var(tape, model, y, u, hp_trainable)?;
        let a = tape.leaf(t.action.clone());
        terms.push(tape.l1(a_hat, a));
    }
    Ok(tape.mean(&terms))
}

fn adv_h_on_tape<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    d_u: &'p MlpParams,
    batch_x: &[&TransitionTriple],
    hp_trainable: bool,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(batch_x.len());
    for t in batch_x {
        let u = eval_h(tape, model, &t.obs, &t.action, hp_trainable)?;
        let logit = disc_logit_frozen(tape, d_u, u)?;
        terms.push(tape.bce_logits(logit, 1.0));
    }
    Ok(tape.mean(&terms))
}

fn adv_p_on_tape<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    d_a: &'p MlpParams,
    batch_y: &[&TransitionTriple],
    hp_trainable: bool,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(batch_y.len());
    for t in batch_y {
        let y = tape.leaf(t.obs.clone());
        let u = tape.leaf(t.action.clone());
        let a_hat = eval_p_var(tape, model, y, u, hp_trainable)?;
        let logit = disc_logit_frozen(tape, d_a, a_hat)?;
        terms.push(tape.bce_logits(logit, 1.0));
    }
    Ok(tape.mean(&terms))
}

fn adv_g_on_tape<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    d_y: &'p MlpParams,
    batch_x: &[&TransitionTriple],
    g_trainable: bool,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(batch_x.len());
    for t in batch_x {
        let y_hat = eval_g(tape, model, &t.obs, g_trainable)?;
        let logit = disc_logit_frozen(tape, d_y, y_hat)?;
        terms.push(tape.bce_logits(logit, 1.0));
    }
    Ok(tape.mean(&terms))
}

/// Builds the full weighted objective on the tape and returns the total node
/// plus the per-term breakdown.
pub(crate) fn full_loss_on_tape<'p>(
    tape: &mut Tape<'p>,
    model: &'p AlignmentModel,
    f: &'p ForwardModel,
    batch_x: &[&TransitionTriple],
    batch_y: &[&TransitionTriple],
    lambdas: &Lambdas,
    g_trainable: bool,
    hp_trainable: bool,
) -> Result<(Var, LossBreakdown)> {
    if lambdas.l0 < 0.0 || lambdas.l1 < 0.0 || lambdas.l2 < 0.0 {
        return Err(Error::InvalidSpec("loss weights must be nonnegative".into()));
    }
    let mut weighted: Vec<(Var, f64)> = Vec::new();
    let mut breakdown = LossBreakdown::default();

    if lambdas.l0 > 0.0 {
        let dyn_cyc = dynamics_cycle_on_tape(tape, model, f, batch_x, g_trainable, hp_trainable)?;
        weighted.push((dyn_cyc, lambdas.l0));
        breakdown
            .terms
            .push((LossTerm::DynCyc, lambdas.l0 * tape.scalar(dyn_cyc)));
    }
    if lambdas.l1 > 0.0 {
        if batch_y.is_empty() {
            return Err(Error::EmptyBatch("full_loss action terms"));
        }
        let d_u = model
            .d_u
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("action terms need D_U".into()))?;
        let d_a = model
            .d_a
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("action terms need D_A".into()))?;
        let adv_h = adv_h_on_tape(tape, model, d_u, batch_x, hp_trainable)?;
        let adv_p = adv_p_on_tape(tape, model, d_a, batch_y, hp_trainable)?;
        let dom = domain_cycle_on_tape(tape, model, batch_x, hp_trainable)?;
        for (term, var) in [
            (LossTerm::AdvH, adv_h),
            (LossTerm::AdvP, adv_p),
            (LossTerm::DomCyc, dom),
        ] {
            weighted.push((var, lambdas.l1));
            breakdown
                .terms
                .push((term, lambdas.l1 * tape.scalar(var)));
        }
    }
    if lambdas.l2 > 0.0 {
        let d_y = model
            .d_y
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("observation term needs D_Y".into()))?;
        let adv_g = adv_g_on_tape(tape, model, d_y, batch_x, g_trainable)?;
        weighted.push((adv_g, lambdas.l2));
        breakdown
            .terms
            .push((LossTerm::AdvG, lambdas.l2 * tape.scalar(adv_g)));
    }

    let total = tape.weighted_sum(&weighted);
    Ok((total, breakdown))
}

/// Discriminator objective on the tape: real samples labeled 1, fakes 0.
/// Fakes arrive as plain values (already detached from their generator).
pub(crate) fn disc_loss_on_tape<'p>(
    tape: &mut Tape<'p>,
    d: &'p MlpParams,
    key: NetKey,
    real: &[&[f64]],
    fake: &[Vec<f64>],
) -> Result<Var> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::EmptyBatch("discriminator update"));
    }
    let mut real_terms = Vec::with_capacity(real.len());
    for r in real {
        let x = tape.leaf(r.to_vec());
        let logit = tape.mlp(d, x, Some(key))?;
        real_terms.push(tape.bce_logits(logit, 1.0));
    }
    let mut fake_terms = Vec::with_capacity(fake.len());
    for f in fake {
        let x = tape.leaf(f.clone());
        let logit = tape.mlp(d, x, Some(key))?;
        fake_terms.push(tape.bce_logits(logit, 0.0));
    }
    let real_mean = tape.mean(&real_terms);
    let fake_mean = tape.mean(&fake_terms);
    Ok(tape.weighted_sum(&[(real_mean, 1.0), (fake_mean, 1.0)]))
}

/// Value-level adversarial losses: runs the discriminator over both batches
/// and returns `(generator_loss, discriminator_loss)`.
pub fn adversarial_pass(
    generator_outputs: &[Vec<f64>],
    real_samples: &[Vec<f64>],
    d: &MlpParams,
) -> Result<(f64, f64)> {
    if generator_outputs.is_empty() || real_samples.is_empty() {
        return Err(Error::EmptyBatch("adversarial_pass"));
    }
    let fake_logits: Vec<f64> = generator_outputs
        .iter()
        .map(|x| d.forward(x).map(|v| v[0]))
        .collect::<Result<_>>()?;
    let real_logits: Vec<f64> = real_samples
        .iter()
        .map(|x| d.forward(x).map(|v| v[0]))
        .collect::<Result<_>>()?;
    let (disc, gen) = gan_losses(&real_logits, &fake_logits)?;
    Ok((gen, disc))
}

/// Value-level domain cycle: mean L1 of `P(y, H(x, a)) - a` over the batch.
pub fn domain_cycle_loss(model: &AlignmentModel, batch_x: &[&TransitionTriple]) -> Result<f64> {
    let mut tape = Tape::new();
    let v = domain_cycle_on_tape(&mut tape, model, batch_x, false)?;
    Ok(tape.scalar(v))
}

/// Value-level dynamics cycle: mean L1 of
/// `G(x_next) - F(G(x), H(x, a))` over the batch. Rejects an unfrozen F.
pub fn dynamics_cycle_loss(
    model: &AlignmentModel,
    f: &ForwardModel,
    batch_x: &[&TransitionTriple],
) -> Result<f64> {
    let mut tape = Tape::new();
    let v = dynamics_cycle_on_tape(&mut tape, model, f, batch_x, false, false)?;
    Ok(tape.scalar(v))
}

/// Value-level full objective with breakdown.
pub fn full_loss(
    model: &AlignmentModel,
    f: &ForwardModel,
    batch_x: &[&TransitionTriple],
    batch_y: &[&TransitionTriple],
    lambda0: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, LossBreakdown)> {
    let mut tape = Tape::new();
    let (total, breakdown) = full_loss_on_tape(
        &mut tape,
        model,
        f,
        batch_x,
        batch_y,
        &Lambdas {
            l0: lambda0,
            l1: lambda1,
            l2: lambda2,
        },
        false,
        false,
    )?;
    Ok((tape.scalar(total), breakdown))
}
