use ldp_min::datagen::Cohort;
use ldp_min::ldp::{laplace_noise, laplace_scale, PrivacyBudget};
use ldp_min::protocol::baseline_min;
use ldp_min::rng::{ScriptedStream, SeededStream};

/// E[min of n Laplace(0, b)] by quadrature on the order-statistic survival
/// function.
fn expected_min_laplace(n: usize, b: f64) -> f64 {
    let sf = |x: f64| {
        if x < 0.0 {
            1.0 - 0.5 * (x / b).exp()
        } else {
            0.5 * (-x / b).exp()
        }
    };
    let (lim, steps) = (60.0 * b, 600_000);
    let dx = lim / steps as f64;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for i in 0..steps {
        let x = (i as f64 + 0.5) * dx;
        pos += sf(x).powi(n as i32) * dx;
        neg += (1.0 - sf(-x).powi(n as i32)) * dx;
    }
    pos - neg
}

#[test]
fn zero_noise_stream_gives_true_min() {
    let c = Cohort::from_values(vec![0.3, -0.2, 0.9]).unwrap();
    let est = baseline_min(&c, PrivacyBudget::new(1.0).unwrap(), &mut ScriptedStream::constant(0.5)).unwrap();
    assert_eq!(est, -0.2);
}

#[test]
fn min_of_noise_matches_order_statistic() {
    let eps = PrivacyBudget::new(1.0).unwrap();
    let n = 16;
    let exact = expected_min_laplace(n, laplace_scale(eps));
    let zeros = Cohort::from_values(vec![0.0; n]).unwrap();
    let mut rng = SeededStream::new(42);
    let reps = 40_000;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..reps {
        let m = baseline_min(&zeros, eps, &mut rng).unwrap();
        sum += m;
        sum2 += m * m;
    }
    let mean = sum / reps as f64;
    let se = ((sum2 / reps as f64 - mean * mean) / reps as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * se, "mean {mean} exact {exact} se {se}");

    // Same draws through a linear scan of laplace_noise.
    let mut a = SeededStream::new(9);
    let mut b = SeededStream::new(9);
    let direct = (0..n)
        .map(|_| laplace_noise(laplace_scale(eps), &mut a))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(baseline_min(&zeros, eps, &mut b).unwrap(), direct);
}

#[test]
fn baseline_error_exceeds_one_at_eps_one() {
    let eps = PrivacyBudget::new(1.0).unwrap();
    let n = 1 << 10;
    let values: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let c = Cohort::from_values(values).unwrap();
    let mut rng = SeededStream::new(5);
    let reps = 1000;
    let err: f64 = (0..reps)
        .map(|_| (baseline_min(&c, eps, &mut rng).unwrap() + 1.0).abs())
        .sum::<f64>()
        / reps as f64;
    assert!(err > 1.0, "{err}");
}
