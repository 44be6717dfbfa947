//! Reference oracles for the test suites.
//!
//! Everything here is written against plain `Vec<f64>` data and shares no
//! code with the `commnet` crate, so the checks stay independent of the
//! implementation they verify.

/// Row-major `m×k` times `k×n` with the textbook triple loop.
pub fn matmul_triple_loop(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns (`vectors[row][col]`).
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].partial_cmp(&a[x][x]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n)
        .map(|r| order.iter().map(|&c| v[r][c]).collect())
        .collect();
    (values, vectors)
}

/// Projects mean-centred `points` onto the top `k` Jacobi eigenvectors of
/// their covariance. Returns `(projections, explained_variance_ratios)`.
pub fn jacobi_pca(points: &[Vec<f64>], k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = points.len();
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for p in points {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n as f64;
            }
        }
    }
    let (values, vectors) = jacobi_eigen(&cov);
    let trace: f64 = values.iter().sum();
    let proj = points
        .iter()
        .map(|p| {
            (0..k)
                .map(|c| (0..d).map(|i| (p[i] - mean[i]) * vectors[i][c]).sum())
                .collect()
        })
        .collect();
    (proj, values[..k].iter().map(|v| v / trace).collect())
}

/// Central-difference gradient of `f` at `x`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Expected distinct-lever ratio when `m` agents each pick one of `m`
/// levers uniformly, by exhaustive enumeration of all `m^m` joint choices.
pub fn lever_random_expectation_brute_force(m: usize) -> f64 {
    let total = m.pow(m as u32);
    let mut sum = 0.0;
    let mut seen = vec![false; m];
    for code in 0..total {
        seen.iter_mut().for_each(|s| *s = false);
        let mut c = code;
        for _ in 0..m {
            seen[c % m] = true;
            c /= m;
        }
        sum += seen.iter().filter(|s| **s).count() as f64 / m as f64;
    }
    sum / total as f64
}

/// Closed form of the same expectation: `(m − m·(1 − 1/m)^m) / m`.
pub fn lever_random_expectation_closed_form(m: usize) -> f64 {
    let mf = m as f64;
    (mf - mf * (1.0 - 1.0 / mf).powi(m as i32)) / mf
}

/// Stacks the block matrix with `h` on the diagonal blocks and `c/(J−1)`
/// off the diagonal, acting on column vectors of stacked agent states.
/// `h` and `c` are `d×d` row-major matrices in column-vector convention.
pub fn block_matrix(h: &[f64], c: &[f64], d: usize, agents: usize) -> Vec<f64> {
    let size = agents * d;
    let mut t = vec![0.0; size * size];
    let scale = 1.0 / (agents as f64 - 1.0);
    for bi in 0..agents {
        for bj in 0..agents {
            for r in 0..d {
                for col in 0..d {
                    let v = if bi == bj {
                        h[r * d + col]
                    } else {
                        c[r * d + col] * scale
                    };
                    t[(bi * d + r) * size + bj * d + col] = v;
                }
            }
        }
    }
    t
}

/// Plain REINFORCE with return-to-go for a softmax policy whose logits
/// are `theta[state * actions + a]`. Each episode is a list of
/// `(state, action, reward)` steps. Returns the ascent direction
/// `Σ_t ∇ log π(a_t|s_t) · Σ_{i≥t} r_i` summed over episodes.
pub fn plain_reinforce_tabular(
    theta: &[f64],
    actions: usize,
    episodes: &[Vec<(usize, usize, f64)>],
) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    for ep in episodes {
        let mut ret = 0.0;
        let mut rtg = vec![0.0; ep.len()];
        for (t, step) in ep.iter().enumerate().rev() {
            ret += step.2;
            rtg[t] = ret;
        }
        for (t, &(s, a, _)) in ep.iter().enumerate() {
            let logits = &theta[s * actions..(s + 1) * actions];
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            for b in 0..actions {
                let p = (logits[b] - max).exp() / z;
                let ind = if a == b { 1.0 } else { 0.0 };
                grad[s * actions + b] += (ind - p) * rtg[t];
            }
        }
    }
    grad
}

/// One car in a traffic step record: its cell after and before the move.
#[derive(Clone, Debug)]
pub struct TrafficCar {
    pub id: usize,
    pub pos: (i64, i64),
    pub prev: (i64, i64),
}

/// The observable part of one traffic step.
#[derive(Clone, Debug)]
pub struct TrafficStep {
    /// Cars on the road when the step is scored.
    pub cars: Vec<TrafficCar>,
    /// IDs that arrived at the end of the step.
    pub spawned: Vec<usize>,
}

/// Recomputes per-step traffic rewards from positions and arrival events.
///
/// A car's time on the road counts from its arrival: cars present at the
/// first step arrived at reset, later ones at the end of the step that
/// lists them as spawned. Collisions are unordered pairs on the same cell,
/// plus pairs that exchanged cells when `count_swaps` is set.
pub fn traffic_rewards(
    steps: &[TrafficStep],
    r_coll: f64,
    r_time: f64,
    count_swaps: bool,
) -> Vec<f64> {
    let mut arrival: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    if let Some(first) = steps.first() {
        for car in &first.cars {
            arrival.insert(car.id, 0);
        }
    }
    let mut out = Vec::with_capacity(steps.len());
    for (t, step) in steps.iter().enumerate() {
        let mut pairs = 0usize;
        for i in 0..step.cars.len() {
            for j in i + 1..step.cars.len() {
                let (a, b) = (&step.cars[i], &step.cars[j]);
                let same = a.pos == b.pos;
                let swapped = a.pos == b.prev && b.pos == a.prev;
                if same || (count_swaps && swapped) {
                    pairs += 1;
                }
            }
        }
        let waited: u64 = step
            .cars
            .iter()
            .map(|c| (t + 1 - arrival.get(&c.id).copied().unwrap_or(t)) as u64)
            .sum();
        out.push(pairs as f64 * r_coll + waited as f64 * r_time);
        for &id in &step.spawned {
            arrival.insert(id, t + 1);
        }
    }
    out
}

/// A combatant between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct FighterState {
    pub id: usize,
    pub team: usize,
    pub pos: (i64, i64),
    pub health: i64,
    pub cooling: i64,
}

#[derive(Clone, Copy, Debug)]
pub struct CombatRules {
    pub grid: i64,
    pub health: i64,
    pub cooldown: i64,
    pub fire_range: i64,
}

/// Lists every combat rule broken by one transition `before → after`,
/// given the `(attacker, target)` pairs that dealt damage.
pub fn combat_violations(
    before: &[FighterState],
    after: &[FighterState],
    hits: &[(usize, usize)],
    rules: CombatRules,
) -> Vec<String> {
    let mut bad = Vec::new();
    if before.len() != after.len()
        || before
            .iter()
            .zip(after)
            .any(|(a, b)| a.id != b.id || a.team != b.team)
    {
        bad.push("fighter roster changed".to_string());
        return bad;
    }
    let find = |id: usize| before.iter().position(|f| f.id == id);
    let mut damage = vec![0i64; before.len()];
    let mut fired = vec![false; before.len()];
    for &(a, t) in hits {
        let (Some(ai), Some(ti)) = (find(a), find(t)) else {
            bad.push(format!("hit {a}->{t} names an unknown fighter"));
            continue;
        };
        let (att, tgt) = (&before[ai], &before[ti]);
        if att.health <= 0 || tgt.health <= 0 {
            bad.push(format!("hit {a}->{t} involves a dead fighter"));
        }
        if att.cooling != 0 {
            bad.push(format!("{a} fired while cooling"));
        }
        if att.team == tgt.team {
            bad.push(format!("{a} hit a teammate"));
        }
        let dist = (att.pos.0 - tgt.pos.0)
            .abs()
            .max((att.pos.1 - tgt.pos.1).abs());
        if dist > rules.fire_range {
            bad.push(format!("{a} hit {t} at distance {dist}"));
        }
        if fired[ai] {
            bad.push(format!("{a} fired twice"));
        }
        fired[ai] = true;
        damage[ti] += 1;
    }
    let mut cells = std::collections::HashSet::new();
    for (i, (b, a)) in before.iter().zip(after).enumerate() {
        let want = (b.health - damage[i]).max(0);
        if a.health != want {
            bad.push(format!(
                "{} health {} -> {}, expected {want}",
                b.id, b.health, a.health
            ));
        }
        if a.health > rules.health || a.health < 0 {
            bad.push(format!("{} health {} out of range", a.id, a.health));
        }
        if b.health <= 0 {
            if a.pos != b.pos {
                bad.push(format!("dead fighter {} moved", b.id));
            }
            continue;
        }
        let want_cooling = if fired[i] {
            rules.cooldown
        } else {
            (b.cooling - 1).max(0)
        };
        if a.cooling != want_cooling {
            bad.push(format!(
                "{} cooling {} -> {}, expected {want_cooling}",
                b.id, b.cooling, a.cooling
            ));
        }
        let step = (a.pos.0 - b.pos.0).abs() + (a.pos.1 - b.pos.1).abs();
        if step > 1 {
            bad.push(format!("{} jumped {step} cells", b.id));
        }
        if a.pos.0 < 0 || a.pos.1 < 0 || a.pos.0 >= rules.grid || a.pos.1 >= rules.grid {
            bad.push(format!("{} left the grid", b.id));
        }
        if a.health > 0 && !cells.insert(a.pos) {
            bad.push(format!("two live fighters share {:?}", a.pos));
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_diagonal() {
        let (vals, vecs) = jacobi_eigen(&[vec![1.0, 0.0], vec![0.0, 3.0]]);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vecs[1][0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lever_expectation_routes_agree() {
        let brute = lever_random_expectation_brute_force(5);
        let closed = lever_random_expectation_closed_form(5);
        assert!((brute - closed).abs() < 1e-12);
        assert!((closed - 0.67232).abs() < 1e-12);
    }

    #[test]
    fn traffic_waiting_counts_from_arrival() {
        let car = |id, pos: (i64, i64), prev| TrafficCar { id, pos, prev };
        let steps = vec![
            TrafficStep {
                cars: vec![car(0, (0, 1), (0, 0))],
                spawned: vec![1],
            },
            TrafficStep {
                cars: vec![car(0, (0, 2), (0, 1)), car(1, (0, 2), (1, 2))],
                spawned: vec![],
            },
        ];
        let r = traffic_rewards(&steps, -10.0, -0.01, true);
        assert!((r[0] - -0.01).abs() < 1e-15);
        // taus 2 and 1, one shared cell.
        assert!((r[1] - (-10.0 - 0.03)).abs() < 1e-12);
    }

    #[test]
    fn combat_rules_flag_bad_hits() {
        let f = |id, team, pos, health, cooling| FighterState {
            id,
            team,
            pos,
            health,
            cooling,
        };
        let rules = CombatRules {
            grid: 5,
            health: 3,
            cooldown: 1,
            fire_range: 1,
        };
        let before = vec![f(0, 0, (0, 0), 3, 0), f(1, 1, (0, 1), 3, 0)];
        let ok = vec![f(0, 0, (0, 0), 3, 1), f(1, 1, (0, 1), 2, 0)];
        assert!(combat_violations(&before, &ok, &[(0, 1)], rules).is_empty());
        let far = vec![f(0, 0, (0, 0), 3, 0), f(1, 1, (0, 3), 3, 0)];
        let far_after = vec![f(0, 0, (0, 0), 3, 1), f(1, 1, (0, 3), 2, 0)];
        assert!(!combat_violations(&far, &far_after, &[(0, 1)], rules).is_empty());
    }
}
