use serde::{Deserialize, Serialize};

use super::{Environment, Outcome, StepResult};
use crate::error::{Error, Result};
use crate::model::{AgentView, Observation};
use crate::numerics::Rng;

pub type Cell = (i64, i64);

/// Moves in action order: north, east, south, west.
const MOVES: [Cell; 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombatConfig {
    pub grid: usize,
    /// Agents per team.
    pub team_size: usize,
    pub health: u8,
    pub cooldown: u8,
    /// Chebyshev radius of attacks.
    pub fire_range: usize,
    /// Chebyshev radius of agent observations.
    pub vision: usize,
    /// Chebyshev radius of each bot's contribution to the shared bot view.
    pub bot_vision: usize,
    pub max_steps: usize,
    /// Side of the square agents spawn in around their team centre.
    pub spawn_square: usize,
    pub lose_reward: f64,
    pub health_weight: f64,
}

impl Default for CombatConfig {
    fn default() -> Self {
        Self {
            grid: 15,
            team_size: 5,
            health: 3,
            cooldown: 1,
            fire_range: 1,
            vision: 1,
            bot_vision: 1,
            max_steps: 40,
            spawn_square: 5,
            lose_reward: -1.0,
            health_weight: -0.1,
        }
    }
}

impl CombatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.team_size == 0 || self.health == 0 || self.max_steps == 0 {
            return Err(Error::Env(
                "team size, health and max_steps must be positive".into(),
            ));
        }
        if self.spawn_square == 0
            || self.spawn_square > self.grid
            || self.spawn_square * self.spawn_square < 2 * self.team_size
        {
            return Err(Error::Env("spawn square cannot hold a team".into()));
        }
        Ok(())
    }

    /// Move actions, one attack per enemy, and do-nothing.
    pub fn num_actions(&self) -> usize {
        4 + self.team_size + 1
    }

    pub fn noop(&self) -> usize {
        4 + self.team_size
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fighter {
    /// `0..m` for the model team, `m..2m` for bots.
    pub id: usize,
    pub team: usize,
    pub pos: Cell,
    pub health: u8,
    /// Steps left before the next attack is allowed.
    pub cooling: u8,
}

impl Fighter {
    pub fn alive(&self) -> bool {
        self.health > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombatStepRecord {
    pub t: usize,
    pub actions: Vec<(usize, usize)>,
    /// `(attacker, target)` pairs that dealt damage.
    pub hits: Vec<(usize, usize)>,
    pub fighters: Vec<Fighter>,
    pub reward: f64,
}

fn chebyshev(a: Cell, b: Cell) -> i64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn manhattan(a: Cell, b: Cell) -> i64 {
    (a.0 - b.0).abs() + (a.1 - b.1).abs()
}

#[derive(Clone, Debug)]
pub struct Combat {
    config: CombatConfig,
    fighters: Vec<Fighter>,
    t: usize,
    outcome: Option<Outcome>,
    last: Option<CombatStepRecord>,
}

impl Combat {
    pub fn new(config: CombatConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            fighters: Vec::new(),
            t: 0,
            outcome: None,
            last: None,
        })
    }

    pub fn config(&self) -> &CombatConfig {
        &self.config
    }

    /// Every fighter, dead ones included, by ID.
    pub fn fighters(&self) -> &[Fighter] {
        &self.fighters
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn last_record(&self) -> Option<&CombatStepRecord> {
        self.last.as_ref()
    }

    /// Replaces the fighters; used to stage scenarios.
    pub fn set_fighters(&mut self, fighters: Vec<Fighter>) -> Result<()> {
        let m = self.config.team_size;
        if fighters.len() != 2 * m
            || fighters
                .iter()
                .enumerate()
                .any(|(i, f)| f.id != i || f.team != i / m)
        {
            return Err(Error::Env(
                "fighters must be listed by ID, model team first".into(),
            ));
        }
        self.fighters = fighters;
        self.t = 0;
        self.outcome = None;
        Ok(())
    }

    fn in_grid(&self, c: Cell) -> bool {
        let n = self.config.grid as i64;
        c.0 >= 0 && c.1 >= 0 && c.0 < n && c.1 < n
    }

    fn occupied(&self, c: Cell) -> bool {
        self.fighters.iter().any(|f| f.alive() && f.pos == c)
    }

    fn enemies(&self, team: usize) -> impl Iterator<Item = &Fighter> {
        self.fighters
            .iter()
            .filter(move |f| f.alive() && f.team != team)
    }

    /// Target ID of an attack action by a member of `team`.
    fn attack_target(&self, team: usize, action: usize) -> Option<usize> {
        let m = self.config.team_size;
        (4..4 + m)
            .contains(&action)
            .then(|| (1 - team) * m + (action - 4))
    }

    /// Hard-coded bot: attack the nearest enemy in range, otherwise step
    /// toward the nearest enemy seen by any bot.
    pub fn bot_policy(&self, bot: usize) -> usize {
        let me = &self.fighters[bot];
        let noop = self.config.noop();
        if !me.alive() {
            return noop;
        }
        let nearest = |candidates: Vec<&Fighter>| {
            candidates
                .into_iter()
                .min_by_key(|f| (manhattan(f.pos, me.pos), f.id))
                .map(|f| (f.id, f.pos))
        };
        let fire = self.config.fire_range as i64;
        if me.cooling == 0 {
            let in_range = self
                .enemies(me.team)
                .filter(|f| chebyshev(f.pos, me.pos) <= fire)
                .collect();
            if let Some((id, _)) = nearest(in_range) {
                return 4 + id % self.config.team_size;
            }
        }
        let sight = self.config.bot_vision as i64;
        let visible = self
            .enemies(me.team)
            .filter(|e| {
                self.fighters
                    .iter()
                    .any(|b| b.alive() && b.team == me.team && chebyshev(b.pos, e.pos) <= sight)
            })
            .collect();
        let Some((_, target)) = nearest(visible) else {
            return noop;
        };
        let (dr, dc) = (target.0 - me.pos.0, target.1 - me.pos.1);
        let row_move = if dr < 0 { 0 } else { 2 };
        let col_move = if dc > 0 { 1 } else { 3 };
        let mut order = Vec::new();
        if dr.abs() >= dc.abs() {
            if dr != 0 {
                order.push(row_move);
            }
            if dc != 0 {
                order.push(col_move);
            }
        } else {
            order.push(col_move);
            if dr != 0 {
                order.push(row_move);
            }
        }
        for a in order {
            let (mr, mc) = MOVES[a];
            let next = (me.pos.0 + mr, me.pos.1 + mc);
            if self.in_grid(next) && !self.occupied(next) {
                return a;
            }
        }
        noop
    }

    fn observe(&self, me: &Fighter) -> Observation {
        let m = self.config.team_size;
        let cells = self.config.grid * self.config.grid;
        let block = 2 * m + 2 + cells + self.config.health as usize + 2;
        let v = self.config.vision as i64;
        let mut active = Vec::new();
        let mut k = 0;
        for dr in -v..=v {
            for dc in -v..=v {
                let cell = (me.pos.0 + dr, me.pos.1 + dc);
                if let Some(f) = self.fighters.iter().find(|f| f.alive() && f.pos == cell) {
                    let base = k * block;
                    active.push(base + f.id);
                    active.push(base + 2 * m + f.team);
                    active.push(
                        base + 2 * m + 2 + (cell.0 as usize) * self.config.grid + cell.1 as usize,
                    );
                    active.push(base + 2 * m + 2 + cells + f.health as usize - 1);
                    let cool = usize::from(f.cooling > 0);
                    active.push(base + 2 * m + 2 + cells + self.config.health as usize + cool);
                }
                k += 1;
            }
        }
        Observation {
            dim: self.input_dim(),
            active,
        }
    }

    fn spawn_team(&mut self, team: usize, rng: &mut Rng) {
        let side = self.config.spawn_square as i64;
        let half = side / 2;
        let span = self.config.grid as i64 - side + 1;
        let centre = (
            half + rng.below(span as usize) as i64,
            half + rng.below(span as usize) as i64,
        );
        let free: Vec<Cell> = (0..side * side)
            .map(|k| (centre.0 - half + k / side, centre.1 - half + k % side))
            .filter(|&c| !self.occupied(c))
            .collect();
        let picks = rng.sample_without_replacement(free.len(), self.config.team_size);
        let m = self.config.team_size;
        for (k, &p) in picks.iter().enumerate() {
            self.fighters.push(Fighter {
                id: team * m + k,
                team,
                pos: free[p],
                health: self.config.health,
                cooling: 0,
            });
        }
    }

    fn team_alive(&self, team: usize) -> bool {
        self.fighters.iter().any(|f| f.team == team && f.alive())
    }
}

impl Environment for Combat {
    fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.fighters.clear();
        self.t = 0;
        self.outcome = None;
        self.last = None;
        self.spawn_team(0, rng);
        self.spawn_team(1, rng);
        Ok(())
    }

    fn views(&self) -> Vec<AgentView> {
        if self.outcome.is_some() {
            return Vec::new();
        }
        self.fighters
            .iter()
            .filter(|f| f.team == 0 && f.alive())
            .map(|f| AgentView {
                slot: f.id,
                obs: self.observe(f),
                pos: Some(f.pos),
            })
            .collect()
    }

    fn capacity(&self) -> usize {
        self.config.team_size
    }

    fn input_dim(&self) -> usize {
        let m = self.config.team_size;
        let side = 2 * self.config.vision + 1;
        side * side
            * (2 * m + 2 + self.config.grid * self.config.grid + self.config.health as usize + 2)
    }

    fn num_actions(&self) -> usize {
        self.config.num_actions()
    }

    fn step(&mut self, actions: &[usize], _rng: &mut Rng) -> Result<StepResult> {
        if self.outcome.is_some() {
            return Err(Error::Env("step after episode end".into()));
        }
        let m = self.config.team_size;
        let live: Vec<usize> = (0..m).filter(|&i| self.fighters[i].alive()).collect();
        if actions.len() != live.len() {
            return Err(Error::Env(format!(
                "{} actions for {} live agents",
                actions.len(),
                live.len()
            )));
        }
        if let Some(&bad) = actions.iter().find(|&&a| a >= self.config.num_actions()) {
            return Err(Error::Env(format!("invalid combat action {bad}")));
        }
        let noop = self.config.noop();
        let mut chosen = vec![noop; 2 * m];
        for (&i, &a) in live.iter().zip(actions) {
            chosen[i] = a;
        }
        for b in m..2 * m {
            chosen[b] = self.bot_policy(b);
        }

        // Attacks resolve together on positions before anyone moves.
        let fire = self.config.fire_range as i64;
        let mut hits = Vec::new();
        let mut attacked = vec![false; 2 * m];
        for (i, &a) in chosen.iter().enumerate() {
            let f = &self.fighters[i];
            if !f.alive() || f.cooling > 0 {
                continue;
            }
            let Some(target) = self.attack_target(f.team, a) else {
                continue;
            };
            let t = &self.fighters[target];
            if t.alive() && chebyshev(f.pos, t.pos) <= fire {
                hits.push((i, target));
                attacked[i] = true;
            }
        }
        for &(_, target) in &hits {
            let t = &mut self.fighters[target];
            t.health = t.health.saturating_sub(1);
        }
        for (f, &hit) in self.fighters.iter_mut().zip(&attacked) {
            f.cooling = if hit {
                self.config.cooldown
            } else {
                f.cooling.saturating_sub(1)
            };
        }

        // Moves in ID order against current occupancy.
        for i in 0..2 * m {
            let a = chosen[i];
            if a >= 4 || !self.fighters[i].alive() {
                continue;
            }
            let (dr, dc) = MOVES[a];
            let p = self.fighters[i].pos;
            let next = (p.0 + dr, p.1 + dc);
            if self.in_grid(next) && !self.occupied(next) {
                self.fighters[i].pos = next;
            }
        }

        self.t += 1;
        let (ours, theirs) = (self.team_alive(0), self.team_alive(1));
        self.outcome = if !theirs && ours {
            Some(Outcome::Win)
        } else if !ours && theirs {
            Some(Outcome::Loss)
        } else if !ours || self.t >= self.config.max_steps {
            Some(Outcome::Draw)
        } else {
            None
        };
        let reward = match self.outcome {
            None => 0.0,
            Some(o) => {
                let enemy_health: u32 = self.fighters[m..].iter().map(|f| f.health as u32).sum();
                let base = if o == Outcome::Win {
                    0.0
                } else {
                    self.config.lose_reward
                };
                base + self.config.health_weight * enemy_health as f64
            }
        };
        self.last = Some(CombatStepRecord {
            t: self.t - 1,
            actions: chosen.iter().copied().enumerate().collect(),
            hits,
            fighters: self.fighters.clone(),
            reward,
        });
        Ok(StepResult {
            reward,
            done: self.outcome.is_some(),
            outcome: self.outcome,
        })
    }

    fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    fn metric(&self) -> f64 {
        if self.outcome == Some(Outcome::Win) {
            1.0
        } else {
            0.0
        }
    }

    fn step_record(&self) -> serde_json::Value {
        serde_json::to_value(&self.last).expect("record serializes")
    }

    fn grid(&self) -> Option<(usize, usize)> {
        Some((self.config.grid, self.config.grid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fighter(id: usize, pos: Cell, health: u8) -> Fighter {
        Fighter {
            id,
            team: id / 5,
            pos,
            health,
            cooling: 0,
        }
    }

    /// Model agent 0 at the centre, bots far away unless placed.
    fn staged(bots: &[(usize, Cell, u8)]) -> Combat {
        let mut c = Combat::new(CombatConfig::default()).unwrap();
        let mut fs: Vec<Fighter> = (0..10).map(|i| fighter(i, (i as i64, 14), 0)).collect();
        fs[0] = fighter(0, (7, 7), 3);
        for &(id, pos, h) in bots {
            fs[id] = fighter(id, pos, h);
        }
        c.set_fighters(fs).unwrap();
        c
    }

    #[test]
    fn out_of_range_attack_does_nothing() {
        let mut c = staged(&[(5, (7, 10), 3), (6, (0, 0), 3)]);
        let mut rng = Rng::new(0);
        c.step(&[4], &mut rng).unwrap();
        assert_eq!(c.fighters()[5].health, 3);
        assert!(c.last_record().unwrap().hits.iter().all(|&(a, _)| a != 0));
    }

    #[test]
    fn three_hits_remove_an_agent_and_cooldown_alternates() {
        let mut c = staged(&[(5, (7, 8), 3), (6, (0, 0), 3)]);
        let mut rng = Rng::new(0);
        let mut damage_steps = Vec::new();
        for t in 0..6 {
            if c.is_done() {
                break;
            }
            let before = c.fighters()[5].health;
            let live = c.views().len();
            c.step(&vec![4; live], &mut rng).unwrap();
            if c.fighters()[5].health < before {
                damage_steps.push(t);
            }
        }
        assert_eq!(damage_steps, vec![0, 2, 4]);
        assert!(!c.fighters()[5].alive());
    }

    #[test]
    fn win_reward_is_zero() {
        let mut c = staged(&[(5, (7, 8), 1)]);
        let mut rng = Rng::new(0);
        let r = c.step(&[4], &mut rng).unwrap();
        assert_eq!(r.outcome, Some(Outcome::Win));
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn draw_and_loss_rewards() {
        let mut c = staged(&[(6, (0, 0), 2)]);
        c.config.max_steps = 1;
        let mut rng = Rng::new(0);
        let r = c.step(&[c.config.noop()], &mut rng).unwrap();
        assert_eq!(r.outcome, Some(Outcome::Draw));
        assert!((r.reward - (-1.0 - 0.2)).abs() < 1e-12);

        let mut c = staged(&[(5, (7, 8), 3)]);
        c.fighters[0].health = 1;
        let r = c.step(&[c.config.noop()], &mut rng).unwrap();
        assert_eq!(r.outcome, Some(Outcome::Loss));
        assert!((r.reward - (-1.0 - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn bot_rules() {
        // Adjacent enemy: attack it.
        let c = staged(&[(5, (7, 8), 3)]);
        assert_eq!(c.bot_policy(5), 4);

        // Two equidistant enemies: lower ID wins.
        let mut c = staged(&[(5, (7, 8), 3)]);
        c.fighters[1] = fighter(1, (7, 9), 3);
        c.fighters[0].pos = (7, 7);
        c.fighters[5].pos = (7, 8);
        assert_eq!(c.bot_policy(5), 4);
        c.fighters[0].pos = (6, 8);
        c.fighters[1].pos = (8, 8);
        assert_eq!(c.bot_policy(5), 4);

        // Nobody visible: do nothing.
        let c = staged(&[(5, (0, 0), 3)]);
        assert_eq!(c.bot_policy(5), c.config.noop());

        // Seen by a teammate: equal gaps, so move along the row.
        let c = staged(&[(5, (0, 0), 3), (6, (7, 8), 3)]);
        assert_eq!(c.bot_policy(5), 2);
    }

    #[test]
    fn lower_id_takes_contested_cell() {
        let mut c = staged(&[(6, (0, 0), 3)]);
        c.fighters[1] = fighter(1, (7, 9), 3);
        let mut rng = Rng::new(0);
        // Agent 0 moves east, agent 1 moves west: both target (7, 8).
        c.step(&[1, 3], &mut rng).unwrap();
        assert_eq!(c.fighters()[0].pos, (7, 8));
        assert_eq!(c.fighters()[1].pos, (7, 9));
    }

    #[test]
    fn spawn_fits_grid() {
        let mut c = Combat::new(CombatConfig::default()).unwrap();
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            c.reset(&mut rng).unwrap();
            let mut cells: Vec<Cell> = c.fighters().iter().map(|f| f.pos).collect();
            assert!(cells.iter().all(|&p| c.in_grid(p)));
            cells.sort();
            cells.dedup();
            assert_eq!(cells.len(), 10);
            assert_eq!(c.views().len(), 5);
            assert!(c
                .views()
                .iter()
                .all(|v| v.obs.active.len() >= 5 && v.obs.dim == 2178));
        }
    }
}
