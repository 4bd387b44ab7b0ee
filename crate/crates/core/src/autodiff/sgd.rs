use super::{AutodiffError, Tensor};

/// One step of plain stochastic gradient descent over a parameter set:
/// `p <- p - learning_rate * grad(p)`, then clear every gradient so the
/// next backward starts from zero.
///
/// Every parameter must carry a populated gradient; a zero learning rate is
/// allowed and leaves the parameters unchanged (but still clears grads).
pub fn sgd_step(params: &[Tensor], learning_rate: f64) -> Result<(), AutodiffError> {
    if !learning_rate.is_finite() || learning_rate < 0.0 {
        return Err(AutodiffError::InvalidArg {
            op: "sgd_step",
            detail: format!("learning rate must be finite and >= 0, got {learning_rate}"),
        });
    }
    for p in params {
        if !p.has_grad() {
            return Err(AutodiffError::MissingGrad);
        }
    }
    for p in params {
        {
            let grad = p.grad().expect("checked above");
            let mut data = p.data_mut();
            for (v, g) in data.iter_mut().zip(&grad) {
                *v -= learning_rate * g;
            }
        }
        p.clear_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn basic_update() {
        let p = Tensor::param(&[1], vec![1.0]).unwrap();
        p.accumulate_grad(&[2.0]);
        sgd_step(std::slice::from_ref(&p), 0.1).unwrap();
        assert!((p.item() - 0.8).abs() < 1e-15);
        assert!(!p.has_grad());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let p = Tensor::param(&[2], vec![3.0, -1.0]).unwrap();
        p.accumulate_grad(&[10.0, 10.0]);
        sgd_step(std::slice::from_ref(&p), 0.0).unwrap();
        assert_eq!(p.to_vec(), vec![3.0, -1.0]);
    }

    #[test]
    fn missing_grad_is_rejected() {
        let p = Tensor::param(&[1], vec![1.0]).unwrap();
        assert!(matches!(sgd_step(&[p], 0.1), Err(AutodiffError::MissingGrad)));
    }

    #[test]
    fn negative_learning_rate_is_rejected() {
        let p = Tensor::param(&[1], vec![1.0]).unwrap();
        p.accumulate_grad(&[1.0]);
        assert!(sgd_step(&[p], -0.5).is_err());
    }

    #[test]
    fn converges_on_quadratic() {
        // loss(p) = (p - 3)^2, minimizer p = 3.
        let p = Tensor::param(&[1], vec![0.0]).unwrap();
        let target = Tensor::scalar(3.0);
        for _ in 0..200 {
            let mut tape = Tape::new();
            let loss = tape.mse(&p, &target).unwrap();
            tape.backward(&loss).unwrap();
            sgd_step(std::slice::from_ref(&p), 0.1).unwrap();
        }
        assert!((p.item() - 3.0).abs() < 1e-6, "p = {}", p.item());
    }
}
