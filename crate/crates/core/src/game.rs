//! Two-player finite games and mixed-equilibrium solvers.
//!
//! Payoffs are stored per player as `[own strategy][rival strategy]`, so
//! player 0 has an `m x n` table and player 1 an `n x m` one.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BimatrixGame {
    payoffs: [Vec<Vec<f64>>; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Lemke–Howson from every starting label, then fictitious play, then
    /// support enumeration on small games.
    #[default]
    Auto,
    FictitiousPlay,
    LemkeHowson,
    SupportEnumeration,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub max_iterations: usize,
    /// Largest support size tried by support enumeration.
    pub max_support: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::Auto,
            max_iterations: 100_000,
            max_support: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    pub strategies: [Vec<f64>; 2],
    pub epsilon: f64,
    pub method: SolverMethod,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl BimatrixGame {
    /// `row[a][b]`: player 0's payoff playing `a` against `b`;
    /// `col[b][a]`: player 1's payoff playing `b` against `a`.
    pub fn new(row: Vec<Vec<f64>>, col: Vec<Vec<f64>>) -> Result<Self> {
        let m = row.len();
        let n = col.len();
        if m == 0 || n == 0 {
            return Err(Error::Domain("payoff tables must be non-empty".into()));
        }
        if row.iter().any(|r| r.len() != n) || col.iter().any(|r| r.len() != m) {
            return Err(Error::Domain(format!(
                "payoff tables must be {m}x{n} and {n}x{m}"
            )));
        }
        if row.iter().chain(&col).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("payoffs must be finite".into()));
        }
        Ok(BimatrixGame {
            payoffs: [row, col],
        })
    }

    /// Strategy counts `(m, n)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.payoffs[0].len(), self.payoffs[1].len())
    }

    pub fn payoff(&self, player: usize, own: usize, rival: usize) -> f64 {
        self.payoffs[player][own][rival]
    }

    pub fn table(&self, player: usize) -> &[Vec<f64>] {
        &self.payoffs[player]
    }

    /// Payoff of each pure strategy of `player` against the rival's mixture.
    pub fn pure_payoffs(&self, player: usize, rival: &[f64]) -> Vec<f64> {
        self.payoffs[player]
            .iter()
            .map(|row| dot(row, rival))
            .collect()
    }

    pub fn expected_payoffs(&self, s0: &[f64], s1: &[f64]) -> [f64; 2] {
        [
            dot(s0, &self.pure_payoffs(0, s1)),
            dot(s1, &self.pure_payoffs(1, s0)),
        ]
    }

    /// Best pure-deviation gain of each player.
    pub fn deviation_gains(&self, s0: &[f64], s1: &[f64]) -> [f64; 2] {
        let gain = |player: usize, own: &[f64], rival: &[f64]| {
            let pure = self.pure_payoffs(player, rival);
            let best = pure.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (best - dot(own, &pure)).max(0.0)
        };
        [gain(0, s0, s1), gain(1, s1, s0)]
    }

    pub fn epsilon(&self, s0: &[f64], s1: &[f64]) -> f64 {
        let [a, b] = self.deviation_gains(s0, s1);
        a.max(b)
    }

    /// Pure profiles `(a, b)` whose best unilateral gain is at most `tolerance`.
    pub fn pure_equilibria(&self, tolerance: f64) -> Vec<(usize, usize)> {
        let (m, n) = self.shape();
        let best0: Vec<f64> = (0..n)
            .map(|b| {
                (0..m)
                    .map(|a| self.payoffs[0][a][b])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let best1: Vec<f64> = (0..m)
            .map(|a| {
                (0..n)
                    .map(|b| self.payoffs[1][b][a])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        (0..m)
            .cartesian_product(0..n)
            .filter(|&(a, b)| {
                best0[b] - self.payoffs[0][a][b] <= tolerance
                    && best1[a] - self.payoffs[1][b][a] <= tolerance
            })
            .collect()
    }

    /// Solves for a mixed profile whose epsilon is at most `tolerance`.
    pub fn solve(&self, tolerance: f64, options: &SolverOptions) -> Result<MixedProfile> {
        let best = self.solve_best(tolerance, options);
        if best.epsilon <= tolerance {
            Ok(best)
        } else {
            Err(Error::NonConvergence {
                iterations: options.max_iterations,
                best_epsilon: best.epsilon,
            })
        }
    }

    /// Runs the configured solvers until one reaches `tolerance` and returns
    /// the lowest-epsilon profile seen, converged or not.
    pub fn solve_best(&self, tolerance: f64, options: &SolverOptions) -> MixedProfile {
        let (m, n) = self.shape();
        let uniform = [vec![1.0 / m as f64; m], vec![1.0 / n as f64; n]];
        let mut best = MixedProfile {
            epsilon: self.epsilon(&uniform[0], &uniform[1]),
            strategies: uniform,
            method: options.method,
        };
        let run_fp = matches!(
            options.method,
            SolverMethod::Auto | SolverMethod::FictitiousPlay
        );
        let run_lh = matches!(
            options.method,
            SolverMethod::Auto | SolverMethod::LemkeHowson
        );
        let run_se = options.method == SolverMethod::SupportEnumeration
            || (options.method == SolverMethod::Auto && m.max(n) <= 15);

        let mut candidates: Vec<Box<dyn FnOnce() -> Vec<MixedProfile> + '_>> = Vec::new();
        if run_lh {
            candidates.push(Box::new(|| {
                // one path per dropped label; stop at the first certified one
                let mut found = Vec::new();
                for label in 0..m + n {
                    if let Some(profile) = self
                        .lemke_howson(label)
                        .map(|s| self.certify(s, SolverMethod::LemkeHowson))
                    {
                        let done = profile.epsilon <= tolerance;
                        found.push(profile);
                        if done {
                            break;
                        }
                    }
                }
                found
            }));
        }
        if run_fp {
            candidates.push(Box::new(|| {
                vec![self.fictitious_play(tolerance, options.max_iterations)]
            }));
        }
        if run_se {
            candidates.push(Box::new(|| {
                self.support_enumeration(options.max_support)
                    .map(|s| self.certify(s, SolverMethod::SupportEnumeration))
                    .into_iter()
                    .collect()
            }));
        }
        for run in candidates {
            for profile in run() {
                if profile.epsilon < best.epsilon {
                    best = profile;
                }
            }
            if best.epsilon <= tolerance {
                break;
            }
        }
        best
    }

    fn certify(&self, strategies: [Vec<f64>; 2], method: SolverMethod) -> MixedProfile {
        let epsilon = self.epsilon(&strategies[0], &strategies[1]);
        MixedProfile {
            strategies,
            epsilon,
            method,
        }
    }

    /// Simultaneous fictitious play; returns the empirical-frequency profile
    /// with the smallest epsilon seen.
    pub fn fictitious_play(&self, tolerance: f64, max_iterations: usize) -> MixedProfile {
        let (m, n) = self.shape();
        // cumulative payoff of each own strategy against the rival's history
        let mut score0 = self.pure_payoffs(0, &vec![1.0 / n as f64; n]);
        let mut score1 = self.pure_payoffs(1, &vec![1.0 / m as f64; m]);
        let mut counts0 = vec![0.0; m];
        let mut counts1 = vec![0.0; n];
        let col0: Vec<Vec<f64>> = (0..n)
            .map(|b| (0..m).map(|a| self.payoffs[0][a][b]).collect())
            .collect();
        let col1: Vec<Vec<f64>> = (0..m)
            .map(|a| (0..n).map(|b| self.payoffs[1][b][a]).collect())
            .collect();

        let mut best_eps = f64::INFINITY;
        let mut best = [vec![0.0; m], vec![0.0; n]];
        for t in 1..=max_iterations.max(1) {
            let a = argmax(&score0);
            let b = argmax(&score1);
            counts0[a] += 1.0;
            counts1[b] += 1.0;
            // score vectors now include the uniform prior plus t plays
            for (s, v) in score0.iter_mut().zip(&col0[b]) {
                *s += v;
            }
            for (s, v) in score1.iter_mut().zip(&col1[a]) {
                *s += v;
            }
            if t % 8 != 0 && t != max_iterations {
                continue;
            }
            let tf = t as f64;
            let s0: Vec<f64> = counts0.iter().map(|c| c / tf).collect();
            let s1: Vec<f64> = counts1.iter().map(|c| c / tf).collect();
            let eps = self.epsilon(&s0, &s1);
            if eps < best_eps {
                best_eps = eps;
                best = [s0, s1];
                if eps <= tolerance {
                    break;
                }
            }
        }
        MixedProfile {
            strategies: best,
            epsilon: best_eps,
            method: SolverMethod::FictitiousPlay,
        }
    }

    /// Lemke–Howson path from the artificial equilibrium, dropping `label`
    /// (`0..m` are player 0's strategies, `m..m+n` player 1's). Uses a
    /// lexicographic ratio test so degenerate games still terminate.
    pub fn lemke_howson(&self, label: usize) -> Option<[Vec<f64>; 2]> {
        let (m, n) = self.shape();
        if label >= m + n {
            return None;
        }
        let min = self
            .payoffs
            .iter()
            .flatten()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let shift = if min <= 0.0 { 1.0 - min } else { 0.0 };

        // tableau_x: player 0's polytope, rows j in 0..n: Σ_i B[i][j] x_i + s_j = 1
        // tableau_y: player 1's polytope, rows i in 0..m: Σ_j A[i][j] y_j + r_i = 1
        // columns are indexed by label, the last column is the right-hand side.
        let width = m + n + 1;
        let mut tx = Tableau::new(n, width, (m..m + n).collect());
        for j in 0..n {
            for i in 0..m {
                tx.rows[j][i] = self.payoffs[1][j][i] + shift;
            }
            tx.rows[j][m + j] = 1.0;
            tx.rows[j][m + n] = 1.0;
        }
        let mut ty = Tableau::new(m, width, (0..m).collect());
        for i in 0..m {
            ty.rows[i][i] = 1.0;
            for j in 0..n {
                ty.rows[i][m + j] = self.payoffs[0][i][j] + shift;
            }
            ty.rows[i][m + n] = 1.0;
        }

        let mut entering = label;
        let mut in_x = label < m;
        let limit = 50 * (m + n) * (m + n) + 1000;
        for _ in 0..limit {
            let table = if in_x { &mut tx } else { &mut ty };
            let leaving = table.pivot(entering)?;
            if leaving == label {
                let mut x = vec![0.0; m];
                for (r, &b) in tx.basis.iter().enumerate() {
                    if b < m {
                        x[b] = tx.rows[r][m + n].max(0.0);
                    }
                }
                let mut y = vec![0.0; n];
                for (r, &b) in ty.basis.iter().enumerate() {
                    if b >= m {
                        y[b - m] = ty.rows[r][m + n].max(0.0);
                    }
                }
                let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
                if !(sx > 0.0 && sy > 0.0) {
                    return None;
                }
                x.iter_mut().for_each(|v| *v /= sx);
                y.iter_mut().for_each(|v| *v /= sy);
                return Some([x, y]);
            }
            entering = leaving;
            in_x = !in_x;
        }
        None
    }

    /// Equal-size support enumeration up to `max_support`; returns the first
    /// profile whose supports are mutually indifferent best responses.
    pub fn support_enumeration(&self, max_support: usize) -> Option<[Vec<f64>; 2]> {
        let (m, n) = self.shape();
        const TOL: f64 = 1e-10;
        for k in 1..=max_support.min(m).min(n) {
            for rows in (0..m).combinations(k) {
                for cols in (0..n).combinations(k) {
                    // y on `cols` makes player 0 indifferent over `rows`
                    let Some(y) = indifferent_mix(&self.payoffs[0], &rows, &cols) else {
                        continue;
                    };
                    let Some(x) = indifferent_mix(&self.payoffs[1], &cols, &rows) else {
                        continue;
                    };
                    if x.iter().chain(&y).any(|v| *v < -TOL) {
                        continue;
                    }
                    let mut s0 = vec![0.0; m];
                    for (&i, v) in rows.iter().zip(&x) {
                        s0[i] = v.max(0.0);
                    }
                    let mut s1 = vec![0.0; n];
                    for (&j, v) in cols.iter().zip(&y) {
                        s1[j] = v.max(0.0);
                    }
                    if self.epsilon(&s0, &s1) <= 1e-9 {
                        return Some([s0, s1]);
                    }
                }
            }
        }
        None
    }
}

/// Mixture over `rival_support` that equalises `table[own][·]` across
/// `own_support`, or `None` when the system is singular.
fn indifferent_mix(
    table: &[Vec<f64>],
    own_support: &[usize],
    rival_support: &[usize],
) -> Option<Vec<f64>> {
    let k = own_support.len();
    // unknowns: k mixture weights and the common value
    let mut a = vec![vec![0.0; k + 2]; k + 1];
    for (r, &own) in own_support.iter().enumerate() {
        for (c, &rival) in rival_support.iter().enumerate() {
            a[r][c] = table[own][rival];
        }
        a[r][k] = -1.0;
    }
    a[k][..k].fill(1.0);
    a[k][k + 1] = 1.0;
    solve_linear(a).map(|sol| sol[..k].to_vec())
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_linear(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let factor = row[col] / pivot_row[col];
                if factor != 0.0 {
                    for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                        *v -= factor * p;
                    }
                }
            }
        }
    }
    Some((0..n).map(|r| a[r][n] / a[r][r]).collect())
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Labels of the initial basis, used for the lexicographic ratio test.
    initial: Vec<usize>,
}

impl Tableau {
    fn new(rows: usize, width: usize, basis: Vec<usize>) -> Self {
        Tableau {
            rows: vec![vec![0.0; width]; rows],
            initial: basis.clone(),
            basis,
        }
    }

    /// Brings column `entering` into the basis and returns the leaving label.
    fn pivot(&mut self, entering: usize) -> Option<usize> {
        const PIVOT_TOL: f64 = 1e-12;
        let rhs = self.rows[0].len() - 1;
        let key = |row: &[f64]| -> Vec<f64> {
            let c = row[entering];
            std::iter::once(row[rhs] / c)
                .chain(self.initial.iter().map(|&l| row[l] / c))
                .collect()
        };
        let mut chosen: Option<(usize, Vec<f64>)> = None;
        for (r, row) in self.rows.iter().enumerate() {
            if row[entering] <= PIVOT_TOL {
                continue;
            }
            let k = key(row);
            let better = match &chosen {
                None => true,
                Some((_, best)) => lex_less(&k, best),
            };
            if better {
                chosen = Some((r, k));
            }
        }
        let (r, _) = chosen?;
        let pivot = self.rows[r][entering];
        self.rows[r].iter_mut().for_each(|v| *v /= pivot);
        let pivot_row = self.rows[r].clone();
        for (s, row) in self.rows.iter_mut().enumerate() {
            if s == r {
                continue;
            }
            let factor = row[entering];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        Some(std::mem::replace(&mut self.basis[r], entering))
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    const TIE: f64 = 1e-12;
    for (x, y) in a.iter().zip(b) {
        let scale = x.abs().max(y.abs()).max(1.0);
        if (x - y).abs() > TIE * scale {
            return x < y;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Closed-form 2x2 mixed equilibrium: each player mixes to make the other indifferent.
    fn two_by_two_oracle(row: [[f64; 2]; 2], col: [[f64; 2]; 2]) -> (f64, f64) {
        // player 1 plays its strategy 0 with prob q so player 0 is indifferent
        let q = (row[1][1] - row[0][1]) / (row[0][0] - row[0][1] - row[1][0] + row[1][1]);
        // col[b][a]: player 1's payoff; player 0 plays 0 with prob p
        let p = (col[1][1] - col[0][1]) / (col[0][0] - col[0][1] - col[1][0] + col[1][1]);
        (p, q)
    }

    fn game_2x2(row: [[f64; 2]; 2], col: [[f64; 2]; 2]) -> BimatrixGame {
        BimatrixGame::new(
            row.iter().map(|r| r.to_vec()).collect(),
            col.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn matching_pennies_variant_all_solvers() {
        let row = [[3.0, -1.0], [-2.0, 1.0]];
        let col = [[-1.0, 2.0], [1.0, -2.0]];
        let (p, q) = two_by_two_oracle(row, col);
        assert!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0);
        let game = game_2x2(row, col);
        assert!(game.pure_equilibria(1e-9).is_empty());
        for method in [SolverMethod::LemkeHowson, SolverMethod::SupportEnumeration] {
            let sol = game
                .solve(
                    1e-9,
                    &SolverOptions {
                        method,
                        ..Default::default()
                    },
                )
                .unwrap();
            assert_abs_diff_eq!(sol.strategies[0][0], p, epsilon = 1e-9);
            assert_abs_diff_eq!(sol.strategies[1][0], q, epsilon = 1e-9);
        }
        let fp = game.fictitious_play(1e-9, 100_000);
        assert!(fp.epsilon <= 1e-2, "{}", fp.epsilon);
        assert_abs_diff_eq!(fp.strategies[0][0], p, epsilon = 2e-2);
    }

    #[test]
    fn rock_paper_scissors() {
        let t = vec![
            vec![0.0, -1.0, 1.0],
            vec![1.0, 0.0, -1.0],
            vec![-1.0, 1.0, 0.0],
        ];
        let game = BimatrixGame::new(t.clone(), t).unwrap();
        for label in 0..6 {
            let [x, y] = game.lemke_howson(label).unwrap();
            for v in x.iter().chain(&y) {
                assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_game_with_dominated_zero_row() {
        // row 0 is all zeros (like a zero price level), duplicated payoffs elsewhere
        let row = vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.5],
            vec![2.0, 0.3, 0.3],
        ];
        let col = row.clone();
        let game = BimatrixGame::new(row, col).unwrap();
        let sol = game.solve(1e-9, &SolverOptions::default()).unwrap();
        assert!(sol.epsilon <= 1e-9);
        assert!(sol.strategies[0][0] < 1e-12);
    }

    #[test]
    fn pure_equilibrium_detection() {
        let row = [[2.0, 0.0], [0.0, 1.0]];
        let game = game_2x2(row, row);
        let pure = game.pure_equilibria(0.0);
        assert_eq!(pure, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn shape_validation() {
        assert!(BimatrixGame::new(vec![vec![1.0, 2.0]], vec![vec![1.0]]).is_err());
        assert!(BimatrixGame::new(vec![vec![f64::NAN]], vec![vec![1.0]]).is_err());
        assert!(BimatrixGame::new(vec![], vec![]).is_err());
    }

    #[test]
    fn random_games_lemke_howson_certifies() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let m = rng.random_range(2..7);
            let n = rng.random_range(2..7);
            let row: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let col: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let game = BimatrixGame::new(row, col).unwrap();
            let [x, y] = game.lemke_howson(0).unwrap();
            assert!(game.epsilon(&x, &y) < 1e-9);
        }
    }
}
