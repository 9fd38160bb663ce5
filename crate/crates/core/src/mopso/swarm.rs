//! Particle state and the per-particle moves: velocity/position update,
//! decaying uniform mutation and local-best bookkeeping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pareto::dominates_unchecked;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub objectives: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_objectives: Vec<f64>,
}

impl Particle {
    pub fn new(position: Vec<f64>, objectives: Vec<f64>) -> Self {
        Particle {
            velocity: vec![0.0; position.len()],
            best_position: position.clone(),
            best_objectives: objectives.clone(),
            position,
            objectives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
}

/// One coordinate of the velocity rule
/// `w*v + c1*r1*(lbest - p) + c2*r2*(leader - p)`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn velocity_step(v: f64, p: f64, lbest: f64, leader: f64, k: &Coefficients, r1: f64, r2: f64) -> f64 {
    k.inertia * v + k.c1 * r1 * (lbest - p) + k.c2 * r2 * (leader - p)
}

/// Move a particle toward its local best and `leader`, drawing fresh
/// `r1, r2` per dimension. `vmax[d]` bounds `|v_d|`; positions end up in
/// `[lower, upper]`.
pub fn update_velocity_position<R: Rng + ?Sized>(
    particle: &mut Particle,
    leader: &[f64],
    k: &Coefficients,
    lower: &[f64],
    upper: &[f64],
    vmax: &[f64],
    rng: &mut R,
) {
    for d in 0..particle.position.len() {
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let p = particle.position[d];
        let v = velocity_step(particle.velocity[d], p, particle.best_position[d], leader[d], k, r1, r2)
            .clamp(-vmax[d], vmax[d]);
        particle.velocity[d] = v;
        particle.position[d] = (p + v).clamp(lower[d], upper[d]);
    }
}

/// With probability `rate * (1 - it/max_it)` resample every coordinate
/// uniformly in a window of width `(ub - lb) * (1 - it/max_it)` centred on
/// it, clamped to the box. Returns whether the particle was mutated.
pub fn mutate<R: Rng + ?Sized>(
    position: &mut [f64],
    iteration: usize,
    max_iterations: usize,
    rate: f64,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> bool {
    if max_iterations == 0 || iteration >= max_iterations || rate <= 0.0 {
        return false;
    }
    let remaining = 1.0 - iteration as f64 / max_iterations as f64;
    if rng.random::<f64>() >= rate * remaining {
        return false;
    }
    for d in 0..position.len() {
        let half = 0.5 * (upper[d] - lower[d]) * remaining;
        let lo = (position[d] - half).max(lower[d]);
        let hi = (position[d] + half).min(upper[d]);
        if hi > lo {
            position[d] = rng.random_range(lo..=hi);
        }
    }
    true
}

/// Keep the new point if it dominates the local best, the old one if it is
/// dominated, otherwise pick one at random.
pub fn update_local_best<R: Rng + ?Sized>(particle: &mut Particle, rng: &mut R) {
    let replace = if dominates_unchecked(&particle.objectives, &particle.best_objectives) {
        true
    } else if dominates_unchecked(&particle.best_objectives, &particle.objectives) {
        false
    } else {
        rng.random::<bool>()
    };
    if replace {
        particle.best_position.clone_from(&particle.position);
        particle.best_objectives.clone_from(&particle.objectives);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const K: Coefficients = Coefficients {
        inertia: 0.5,
        c1: 0.1,
        c2: 0.2,
    };

    #[test]
    fn velocity_hand_cases() {
        assert_eq!(velocity_step(0.0, 0.3, 0.3, 0.3, &K, 0.7, 0.2), 0.0);
        let inertia_only = Coefficients {
            inertia: 0.5,
            c1: 0.0,
            c2: 0.0,
        };
        assert_eq!(velocity_step(1.0, 0.0, 5.0, 9.0, &inertia_only, 1.0, 1.0), 0.5);
        let v = velocity_step(0.0, 0.0, 1.0, 2.0, &K, 1.0, 1.0);
        assert!((v - 0.5).abs() < 1e-15);
        assert!((0.0 + v - 0.5_f64).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_stays() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = Particle::new(vec![0.4, 2.0], vec![1.0, 1.0]);
        update_velocity_position(&mut p, &[0.4, 2.0], &K, &[0.0, 0.0], &[1.0, 5.0], &[1.0, 5.0], &mut rng);
        assert_eq!(p.position, vec![0.4, 2.0]);
        assert_eq!(p.velocity, vec![0.0, 0.0]);
    }

    #[test]
    fn update_respects_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let big = Coefficients {
            inertia: 3.0,
            c1: 4.0,
            c2: 4.0,
        };
        let mut p = Particle::new(vec![0.9], vec![0.0]);
        p.velocity = vec![10.0];
        for _ in 0..100 {
            update_velocity_position(&mut p, &[0.0], &big, &[0.0], &[1.0], &[1.0], &mut rng);
            assert!((0.0..=1.0).contains(&p.position[0]));
            assert!(p.velocity[0].abs() <= 1.0);
        }
    }

    #[test]
    fn mutation_schedule_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = vec![0.5, 0.5];
        assert!(!mutate(&mut x, 10, 10, 1.0, &[0.0; 2], &[1.0; 2], &mut rng));
        assert!(!mutate(&mut x, 0, 10, 0.0, &[0.0; 2], &[1.0; 2], &mut rng));
        assert_eq!(x, vec![0.5, 0.5]);
    }

    #[test]
    fn forced_full_window_mutation_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lower = [-1.0, 0.0, 1.0];
        let upper = [1.0, 0.5, 500.0];
        let mut x = vec![0.99, 0.0, 250.0];
        let mut moved = false;
        for _ in 0..10_000 {
            let before = x.clone();
            assert!(mutate(&mut x, 0, 50, 1.0, &lower, &upper, &mut rng));
            moved |= x != before;
            for d in 0..3 {
                assert!((lower[d]..=upper[d]).contains(&x[d]));
            }
        }
        assert!(moved);
    }

    #[test]
    fn local_best_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = Particle::new(vec![0.0], vec![1.0, 1.0]);
        p.position = vec![1.0];
        p.objectives = vec![0.5, 0.5];
        update_local_best(&mut p, &mut rng);
        assert_eq!(p.best_position, vec![1.0]);

        p.position = vec![2.0];
        p.objectives = vec![0.9, 0.9];
        update_local_best(&mut p, &mut rng);
        assert_eq!(p.best_position, vec![1.0]);

        let mut seen = [false; 2];
        for i in 0..64 {
            let mut q = Particle::new(vec![0.0], vec![0.0, 1.0]);
            q.position = vec![i as f64 + 1.0];
            q.objectives = vec![1.0, 0.0];
            update_local_best(&mut q, &mut rng);
            seen[usize::from(q.best_position[0] != 0.0)] = true;
        }
        assert_eq!(seen, [true, true]);
    }
}
