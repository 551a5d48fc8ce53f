use super::{AttackConfig, AttackError, AttackState};
use crate::assets::Texture;
use crate::renderer::TexGradient;

/// Largest `f32` in `[lo, hi]` closest to `v`; bounds are computed in `f64`.
fn project_texel(v: f64, lo: f64, hi: f64) -> f32 {
    let x = v.clamp(lo, hi);
    let mut out = x as f32;
    if f64::from(out) > hi {
        out = out.next_down();
    }
    if f64::from(out) < lo {
        out = out.next_up();
    }
    out
}

/// Per-texel bounds of the feasible set `[T_i - eps, T_i + eps] ∩ [0, 1]`.
fn bounds(initial: f32, budget: f64) -> (f64, f64) {
    let t = f64::from(initial);
    ((t - budget).max(0.0), (t + budget).min(1.0))
}

/// Projects an arbitrary `f64` texel field onto the budget ball within valid colors.
pub fn project(values: &[[f64; 3]], initial: &Texture, budget: f64) -> Texture {
    let texels = values
        .iter()
        .zip(&initial.texels)
        .map(|(v, t0)| {
            [0, 1, 2].map(|c| {
                let (lo, hi) = bounds(t0[c], budget);
                project_texel(v[c], lo, hi)
            })
        })
        .collect();
    Texture {
        width: initial.width,
        height: initial.height,
        texels,
        wrap: initial.wrap,
    }
}

fn check_dims(texture: &Texture, grad: &TexGradient) -> Result<(), AttackError> {
    if (texture.width, texture.height) != (grad.width, grad.height) {
        return Err(AttackError::DimensionMismatch {
            texture: (texture.width, texture.height),
            gradient: (grad.width, grad.height),
        });
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `z = Π(T + α · sign(g))`, with `g` the gradient of the maximized objective.
fn signed_step(current: &Texture, grad: &TexGradient, alpha: f64) -> Vec<[f64; 3]> {
    current
        .texels
        .iter()
        .zip(&grad.values)
        .map(|(t, g)| [0, 1, 2].map(|c| f64::from(t[c]) + alpha * sign(g[c])))
        .collect()
}

/// One projected sign-gradient ascent step on the attack objective.
pub fn pgd_step(state: &AttackState, grad: &TexGradient, config: &AttackConfig) -> Result<Texture, AttackError> {
    check_dims(&state.current, grad)?;
    Ok(project(
        &signed_step(&state.current, grad, state.step_size),
        &state.initial,
        config.budget,
    ))
}

/// Momentum step: `T ← Π(T + ρ(z − T) + (1 − ρ)(T − T_prev))` with `z` the PGD step.
///
/// Without momentum history this is exactly [`pgd_step`].
pub fn auto_pgd_step(state: &AttackState, grad: &TexGradient, config: &AttackConfig) -> Result<Texture, AttackError> {
    check_dims(&state.current, grad)?;
    let z = project(
        &signed_step(&state.current, grad, state.step_size),
        &state.initial,
        config.budget,
    );
    let Some(prev) = &state.previous else {
        return Ok(z);
    };
    let rho = config.auto_pgd.momentum;
    let values: Vec<[f64; 3]> = state
        .current
        .texels
        .iter()
        .zip(&z.texels)
        .zip(&prev.texels)
        .map(|((t, z), p)| {
            [0, 1, 2].map(|c| {
                let (t, z, p) = (f64::from(t[c]), f64::from(z[c]), f64::from(p[c]));
                t + rho * (z - t) + (1.0 - rho) * (t - p)
            })
        })
        .collect();
    Ok(project(&values, &state.initial, config.budget))
}

/// Iterations (strictly increasing, below `iterations`) at which the
/// step-size condition is checked: `ceil(p_j · N)` with `p_0 = 0`,
/// `p_1 = first`, `p_{j+1} = p_j + max(p_j − p_{j−1} − decay, min_gap)`.
pub fn checkpoints(iterations: usize, first: f64, decay: f64, min_gap: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut prev, mut p) = (0.0f64, first);
    while p < 1.0 {
        // tolerance absorbs rounding in the accumulated fractions
        let w = (p * iterations as f64 - 1e-9).ceil() as usize;
        if w >= iterations {
            break;
        }
        if w > 0 && out.last().is_none_or(|&last| w > last) {
            out.push(w);
        }
        let next = p + (p - prev - decay).max(min_gap);
        prev = p;
        p = next;
    }
    out
}
