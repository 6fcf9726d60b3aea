//! Property tests of collision kinematics, the bath kernel and empirical moments.

use granular_core::background::{elastic_steady_state, kernel_k, kernel_k_relative};
use granular_core::diagnostics::moments;
use granular_core::kinematics::{
    bath_post_collision, energy_loss_closed_form, gamma_alpha_p, post_collision, sphere_average_gain, TestFunction,
};
use granular_core::quadrature::SphereRule;
use granular_core::{BathParams, KernelParams, ParticleEnsemble, Restitution, Velocity};
use proptest::prelude::*;

fn velocity(scale: f64) -> impl Strategy<Value = Velocity> {
    prop::array::uniform3(-scale..scale).prop_map(Velocity)
}

fn unit() -> impl Strategy<Value = Velocity> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        Velocity::new(s * phi.cos(), s * phi.sin(), z)
    })
}

fn restitution() -> impl Strategy<Value = Restitution> {
    (0.05f64..=1.0).prop_map(|a| Restitution::new(a).unwrap())
}

proptest! {
    #[test]
    fn collisions_conserve_momentum_and_lose_energy(v in velocity(5.0), w in velocity(5.0), s in unit(), a in restitution()) {
        let out = post_collision(v, w, s, a).unwrap();
        let dp = (out.v_post + out.w_post) - (v + w);
        prop_assert!(dp.norm() <= 1e-12 * (1.0 + v.norm() + w.norm()));
        let closed = energy_loss_closed_form(v, w, s, a);
        let scale = 1.0 + v.norm_sq() + w.norm_sq();
        prop_assert!((out.energy_change - closed).abs() <= 1e-12 * scale);
        prop_assert!(out.energy_change <= 1e-12 * scale);
    }

    #[test]
    fn elastic_collisions_conserve_energy(v in velocity(5.0), w in velocity(5.0), s in unit()) {
        let out = post_collision(v, w, s, Restitution::ELASTIC).unwrap();
        prop_assert!(out.energy_change.abs() <= 1e-12 * (1.0 + v.norm_sq() + w.norm_sq()));
        // Elastic post-collisional relative velocity is |q| σ.
        let q = out.v_post - out.w_post;
        prop_assert!((q - s * (v - w).norm()).norm() <= 1e-12 * (1.0 + (v - w).norm()));
    }

    #[test]
    fn bath_collision_matches_pair_collision(v in velocity(5.0), w in velocity(5.0), s in unit(), e in restitution()) {
        let single = bath_post_collision(v, w, s, e).unwrap();
        let pair = post_collision(v, w, s, e).unwrap();
        prop_assert_eq!(single, pair.v_post);
    }

    #[test]
    fn kernel_satisfies_detailed_balance(
        v in velocity(4.0),
        w in velocity(4.0),
        e in 0.0f64..=1.0,
        theta0 in 0.5f64..2.0,
    ) {
        prop_assume!((v - w).norm() > 1e-6);
        let bath = BathParams::centered(theta0, e).unwrap();
        let kp = KernelParams::calibrate(&bath).unwrap();
        let m = elastic_steady_state(&bath);
        let a = kernel_k(&kp, v, w).unwrap() * m.density(w);
        let b = kernel_k(&kp, w, v).unwrap() * m.density(v);
        prop_assume!(a.max(b) > 1e-280);
        prop_assert!((a - b).abs() <= 1e-10 * a.max(b), "{} vs {}", a, b);
        let r = kernel_k_relative(&kp, v, w).unwrap();
        prop_assert!((r - kernel_k(&kp, v, w).unwrap()).abs() <= 1e-12 * r.max(1e-300));
    }

    #[test]
    fn povzner_bound_holds(
        v in velocity(4.0),
        w in velocity(4.0),
        a in restitution(),
        p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]),
    ) {
        prop_assume!(v.norm_sq() + w.norm_sq() > 1e-6);
        let gamma = gamma_alpha_p(p, a).unwrap().gamma_alpha_p;
        let gain = sphere_average_gain(v, w, a, TestFunction::Power(p), &SphereRule::new(16, 16)).unwrap();
        prop_assert!(gain <= gamma * (v.norm_sq() + w.norm_sq()).powf(p) * (1.0 + 1e-10));
    }

    #[test]
    fn empirical_moments_are_log_convex(vs in prop::collection::vec(velocity(3.0), 40..200)) {
        let ens = ParticleEnsemble::from_velocities(vs, 1.0);
        let ps: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
        let t = moments(&ens, &ps).unwrap();
        for k in 1..ps.len() - 1 {
            let (a, b, c) = (t.entries[k - 1].value, t.entries[k].value, t.entries[k + 1].value);
            prop_assert!(b * b <= a * c * (1.0 + 1e-12));
        }
        prop_assert!((t.entries[0].value - 1.0).abs() < 1e-12);
    }
}
