//! Exact discrete optimal transport for small supports.
//!
//! Successive shortest augmenting paths with node potentials give the exact
//! W1 value, the transport plan, and the optimal dual pair. Support sizes in
//! this codebase stay below ~64 points, so no scaling tricks are needed.
//! Distributions on the line use the closed-form cumulative formula instead.

const MASS_EPS: f64 = 1e-15;

/// Exact transport solution: primal plan and optimal duals with
/// `source_potential[i] + sink_potential[j] ≤ cost(i,j)` and
/// `cost = Σ p·u + Σ q·v`.
#[derive(Clone, Debug)]
pub struct Transport {
    pub cost: f64,
    /// Row-major n×m plan.
    pub plan: Vec<f64>,
    pub source_potential: Vec<f64>,
    pub sink_potential: Vec<f64>,
}

/// Minimum-cost transport between balanced nonnegative vectors `p` and `q`
/// under a dense cost matrix (row-major n×m, nonnegative entries).
pub fn transport(p: &[f64], q: &[f64], cost: &[f64]) -> Transport {
    let n = p.len();
    let m = q.len();
    assert_eq!(cost.len(), n * m, "cost matrix shape");
    debug_assert!((p.iter().sum::<f64>() - q.iter().sum::<f64>()).abs() < 1e-9, "unbalanced marginals");

    let total = n + m;
    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    let mut plan = vec![0.0; n * m];
    // Potentials keep reduced costs nonnegative across phases.
    let mut pot = vec![0.0; total];

    let mut remaining: f64 = supply.iter().sum();
    while remaining > MASS_EPS {
        // Multi-source Dijkstra over the residual graph in reduced costs.
        let mut dist = vec![f64::INFINITY; total];
        let mut parent: Vec<Option<usize>> = vec![None; total];
        let mut done = vec![false; total];
        for (i, &s) in supply.iter().enumerate() {
            if s > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        let mut target: Option<usize> = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && demand[u - n] > MASS_EPS {
                target = Some(u);
                break;
            }
            if u < n {
                // Forward arcs source u -> every sink.
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = cost[u * m + j] + pot[u] - pot[v];
                    if dist[u] + rc < dist[v] - 1e-15 {
                        dist[v] = dist[u] + rc;
                        parent[v] = Some(u);
                    }
                }
            } else {
                // Backward arcs along positive flow: sink -> source.
                let j = u - n;
                for i in 0..n {
                    if done[i] || plan[i * m + j] <= MASS_EPS {
                        continue;
                    }
                    let rc = -cost[i * m + j] + pot[u] - pot[i];
                    if dist[u] + rc < dist[i] - 1e-15 {
                        dist[i] = dist[u] + rc;
                        parent[i] = Some(u);
                    }
                }
            }
        }
        let t = target.expect("balanced marginals always admit an augmenting path");
        let d_t = dist[t];

        // Bottleneck along the path.
        let mut bottleneck = demand[t - n];
        let mut node = t;
        while let Some(prev) = parent[node] {
            if node >= n {
                // prev is a source, arc prev -> node is uncapacitated.
            } else {
                // prev is a sink, backward arc limited by existing flow.
                bottleneck = bottleneck.min(plan[node * m + (prev - n)]);
            }
            node = prev;
        }
        bottleneck = bottleneck.min(supply[node]);

        // Apply the augmentation.
        let origin = node;
        let mut node = t;
        while let Some(prev) = parent[node] {
            if node >= n {
                plan[prev * m + (node - n)] += bottleneck;
            } else {
                plan[node * m + (prev - n)] -= bottleneck;
            }
            node = prev;
        }
        supply[origin] -= bottleneck;
        demand[t - n] -= bottleneck;
        remaining -= bottleneck;

        for v in 0..total {
            pot[v] += dist[v].min(d_t);
        }
    }

    let total_cost: f64 = plan.iter().zip(cost).map(|(f, c)| f * c).sum();
    let source_potential: Vec<f64> = (0..n).map(|i| -pot[i]).collect();
    let sink_potential: Vec<f64> = (0..m).map(|j| pot[n + j]).collect();
    Transport { cost: total_cost, plan, source_potential, sink_potential }
}

/// W1 between distributions on the line: `Σ_k |F_p − F_q| Δx` over the sorted
/// support, plus the matching subgradient of the cost in `q`.
pub fn w1_line(p: &[f64], q: &[f64], coords: &[f64]) -> (f64, Vec<f64>) {
    let k = coords.len();
    assert_eq!(p.len(), k);
    assert_eq!(q.len(), k);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| coords[a].partial_cmp(&coords[b]).unwrap());

    let mut value = 0.0;
    let mut fp = 0.0;
    let mut fq = 0.0;
    // signs[r] = sign(F_p − F_q) on the gap after the r-th sorted point.
    let mut signed_gaps = vec![0.0; k];
    for r in 0..k.saturating_sub(1) {
        fp += p[order[r]];
        fq += q[order[r]];
        let dx = coords[order[r + 1]] - coords[order[r]];
        let diff = fp - fq;
        value += diff.abs() * dx;
        // Ties (up to accumulation noise) contribute no subgradient;
        // f64::signum would map them to ±1.
        let sign = if diff > 1e-12 {
            1.0
        } else if diff < -1e-12 {
            -1.0
        } else {
            0.0
        };
        signed_gaps[r] = sign * dx;
    }
    // ∂W1/∂q_(r) = −Σ_{gaps ≥ r} sign(F_p − F_q)·Δx.
    let mut grad = vec![0.0; k];
    let mut suffix = 0.0;
    for r in (0..k).rev() {
        if r < k.saturating_sub(1) {
            suffix += signed_gaps[r];
        }
        grad[order[r]] = -suffix;
    }
    (value, grad)
}
