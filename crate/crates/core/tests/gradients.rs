//! Analytic gradients of the total loss against a central finite
//! difference oracle, over every parameter including log(tau).

mod common;

use common::{finite_difference_grad, grad_mismatch, gradcheck_setup, loss_at_params};
use sempair_core::loss::{hard_infonce_loss_with_grads, semantic_matching_loss_with_grads};

const FD_STEP: f64 = 1e-5;

#[test]
fn semantic_loss_gradients_match_finite_differences() {
    let setup = gradcheck_setup(42);
    let params = setup.model.params_vec();

    let (emb, cache) = setup.model.forward_batch(&setup.images, &setup.texts).unwrap();
    let (_, loss_grads) = semantic_matching_loss_with_grads(
        &emb.v_tilde,
        &emb.t_tilde,
        &setup.bundle,
        &setup.model.temperature,
    )
    .unwrap();
    let analytic = setup.model.backward(&cache, &loss_grads);

    let numeric = finite_difference_grad(&params, FD_STEP, |p| {
        loss_at_params(&setup.model, p, &setup.images, &setup.texts, &setup.bundle)
    });

    let mut worst: Option<(usize, f64)> = None;
    let mut failures = 0;
    for i in 0..params.len() {
        if let Some(rel) = grad_mismatch(analytic[i], numeric[i]) {
            failures += 1;
            if worst.is_none_or(|(_, w)| rel > w) {
                worst = Some((i, rel));
            }
        }
    }
    assert_eq!(
        failures,
        0,
        "{} of {} parameters mismatched; worst at index {:?}",
        failures,
        params.len(),
        worst
    );
}

#[test]
fn temperature_gradient_matches_finite_differences() {
    let setup = gradcheck_setup(7);
    let params = setup.model.params_vec();
    let tau_idx = setup.model.tau_param_index();

    let (emb, cache) = setup.model.forward_batch(&setup.images, &setup.texts).unwrap();
    let (_, loss_grads) = semantic_matching_loss_with_grads(
        &emb.v_tilde,
        &emb.t_tilde,
        &setup.bundle,
        &setup.model.temperature,
    )
    .unwrap();
    let analytic = setup.model.backward(&cache, &loss_grads)[tau_idx];

    let mut work = params.clone();
    let orig = work[tau_idx];
    work[tau_idx] = orig + FD_STEP;
    let plus = loss_at_params(&setup.model, &work, &setup.images, &setup.texts, &setup.bundle);
    work[tau_idx] = orig - FD_STEP;
    let minus = loss_at_params(&setup.model, &work, &setup.images, &setup.texts, &setup.bundle);
    let numeric = (plus - minus) / (2.0 * FD_STEP);

    assert!(
        grad_mismatch(analytic, numeric).is_none(),
        "tau gradient mismatch: analytic {analytic}, numeric {numeric}"
    );
}

#[test]
fn every_parameter_receives_gradient_on_a_covering_batch() {
    // The gradcheck batch covers the whole vocabulary, so no parameter
    // should sit on a dead branch.
    let setup = gradcheck_setup(3);
    let (emb, cache) = setup.model.forward_batch(&setup.images, &setup.texts).unwrap();
    let (_, loss_grads) = semantic_matching_loss_with_grads(
        &emb.v_tilde,
        &emb.t_tilde,
        &setup.bundle,
        &setup.model.temperature,
    )
    .unwrap();
    let grads = setup.model.backward(&cache, &loss_grads);
    let dead: Vec<usize> = grads
        .iter()
        .enumerate()
        .filter(|(_, g)| **g == 0.0)
        .map(|(i, _)| i)
        .collect();
    assert!(
        dead.is_empty(),
        "{} parameters received zero gradient: first few {:?}",
        dead.len(),
        &dead[..dead.len().min(8)]
    );
}

#[test]
fn infonce_gradients_match_finite_differences() {
    let setup = gradcheck_setup(11);
    let params = setup.model.params_vec();

    let (emb, cache) = setup.model.forward_batch(&setup.images, &setup.texts).unwrap();
    let (_, loss_grads) =
        hard_infonce_loss_with_grads(&emb.v_tilde, &emb.t_tilde, &setup.model.temperature).unwrap();
    let analytic = setup.model.backward(&cache, &loss_grads);

    let numeric = finite_difference_grad(&params, FD_STEP, |p| {
        let mut model = setup.model.clone();
        model.set_params(p).unwrap();
        let (emb, _) = model.forward_batch(&setup.images, &setup.texts).unwrap();
        sempair_core::loss::hard_infonce_loss(&emb.v_tilde, &emb.t_tilde, &model.temperature)
            .unwrap()
    });

    for i in 0..params.len() {
        assert!(
            grad_mismatch(analytic[i], numeric[i]).is_none(),
            "index {i}: analytic {}, numeric {}",
            analytic[i],
            numeric[i]
        );
    }
}
