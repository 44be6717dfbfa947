use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Environment, Outcome, StepResult};
use crate::error::{Error, Result};
use crate::model::{AgentView, Observation};
use crate::numerics::Rng;

pub const GAS: usize = 0;
pub const BRAKE: usize = 1;

pub type Cell = (i64, i64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficVariant {
    /// Two one-way roads crossing on a 7×7 grid.
    Easy,
    /// One junction of two two-way roads on a 14×14 grid.
    Medium,
    /// Four junctions of two-way roads on an 18×18 grid.
    Hard,
}

impl std::str::FromStr for TrafficVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Self::Easy),
            "medium" => Ok(Self::Medium),
            "hard" => Ok(Self::Hard),
            other => Err(Error::Env(format!("unknown traffic variant {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub variant: TrafficVariant,
    /// Arrival probability per arrival point and step.
    pub p_arrive: f64,
    /// Car ID slots; the width of the ID one-hot.
    pub max_cars: usize,
    /// Live-car cap; may be lowered by a curriculum.
    pub car_limit: usize,
    pub r_coll: f64,
    pub r_time: f64,
    pub max_steps: usize,
    /// Chebyshev vision radius; `None` observes only the car itself.
    pub vision: Option<usize>,
    /// Count two cars exchanging cells as a collision.
    pub count_swaps: bool,
}

impl TrafficConfig {
    /// End-of-curriculum settings of each variant.
    pub fn new(variant: TrafficVariant) -> Self {
        let (p_arrive, cars) = match variant {
            TrafficVariant::Easy => (0.3, 5),
            TrafficVariant::Medium => (0.2, 10),
            TrafficVariant::Hard => (0.05, 20),
        };
        Self {
            variant,
            p_arrive,
            max_cars: cars,
            car_limit: cars,
            r_coll: -10.0,
            r_time: -0.01,
            max_steps: 40,
            vision: Some(1),
            count_swaps: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_arrive) {
            return Err(Error::Env(format!(
                "p_arrive {} outside [0, 1]",
                self.p_arrive
            )));
        }
        if self.max_cars == 0 || self.car_limit == 0 || self.car_limit > self.max_cars {
            return Err(Error::Env(format!(
                "need 1 <= car_limit <= max_cars, got {} and {}",
                self.car_limit, self.max_cars
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Env("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    fn delta(self) -> Cell {
        match self {
            Dir::North => (-1, 0),
            Dir::East => (0, 1),
            Dir::South => (1, 0),
            Dir::West => (0, -1),
        }
    }
}

/// Road layout: lanes, arrival points and the route table.
#[derive(Clone, Debug, PartialEq)]
pub struct Junction {
    pub rows: usize,
    pub cols: usize,
    /// Cell paths from an arrival point to an exit.
    pub routes: Vec<Vec<Cell>>,
    /// Arrival cell and the indices of the routes starting there.
    pub arrivals: Vec<(Cell, Vec<usize>)>,
}

impl Junction {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < self.rows && (c.1 as usize) < self.cols
    }

    pub fn cell_index(&self, c: Cell) -> usize {
        c.0 as usize * self.cols + c.1 as usize
    }

    /// Whether `c` lies on any route.
    pub fn on_road(&self, c: Cell) -> bool {
        self.routes.iter().any(|r| r.contains(&c))
    }
}

/// Builds the grid and route table of a variant.
///
/// Lanes follow right-hand driving. A car may leave a cell along any lane
/// passing through it, which allows turns at crossings. Each arrival point
/// gets the shortest lane path to every exit except the one beside it on
/// the same road.
pub fn build_junction(variant: TrafficVariant) -> Junction {
    let (size, lanes): (usize, Vec<(Dir, i64)>) = match variant {
        TrafficVariant::Easy => (7, vec![(Dir::East, 3), (Dir::South, 3)]),
        TrafficVariant::Medium => (
            14,
            vec![
                (Dir::South, 6),
                (Dir::North, 7),
                (Dir::West, 6),
                (Dir::East, 7),
            ],
        ),
        TrafficVariant::Hard => (
            18,
            vec![
                (Dir::South, 5),
                (Dir::North, 6),
                (Dir::South, 11),
                (Dir::North, 12),
                (Dir::West, 5),
                (Dir::East, 6),
                (Dir::West, 11),
                (Dir::East, 12),
            ],
        ),
    };
    let n = size as i64;
    let mut dirs: HashMap<Cell, Vec<Dir>> = HashMap::new();
    let mut entries = Vec::new();
    let mut exits = Vec::new();
    for &(dir, line) in &lanes {
        let cells: Vec<Cell> = (0..n)
            .map(|k| match dir {
                Dir::South => (k, line),
                Dir::North => (n - 1 - k, line),
                Dir::East => (line, k),
                Dir::West => (line, n - 1 - k),
            })
            .collect();
        for &c in &cells {
            dirs.entry(c).or_default().push(dir);
        }
        entries.push(cells[0]);
        exits.push(cells[cells.len() - 1]);
    }
    let mut routes = Vec::new();
    let mut arrivals = Vec::new();
    for &start in &entries {
        let paths = shortest_paths(start, &dirs, n);
        let mut ids = Vec::new();
        for &exit in &exits {
            let beside = (start.0 - exit.0).abs() + (start.1 - exit.1).abs() == 1;
            if beside {
                continue;
            }
            if let Some(path) = paths(exit) {
                ids.push(routes.len());
                routes.push(path);
            }
        }
        arrivals.push((start, ids));
    }
    Junction {
        rows: size,
        cols: size,
        routes,
        arrivals,
    }
}

fn shortest_paths(
    start: Cell,
    dirs: &HashMap<Cell, Vec<Dir>>,
    n: i64,
) -> impl Fn(Cell) -> Option<Vec<Cell>> {
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    parent.insert(start, start);
    while let Some(c) = queue.pop_front() {
        for d in &dirs[&c] {
            let (dr, dc) = d.delta();
            let next = (c.0 + dr, c.1 + dc);
            if next.0 < 0 || next.1 < 0 || next.0 >= n || next.1 >= n {
                continue;
            }
            if dirs.contains_key(&next) && !parent.contains_key(&next) {
                parent.insert(next, c);
                queue.push_back(next);
            }
        }
    }
    move |goal| {
        parent.get(&goal)?;
        let mut path = vec![goal];
        let mut c = goal;
        while c != start {
            c = parent[&c];
            path.push(c);
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Car {
    pub id: usize,
    pub route: usize,
    /// Position along the route.
    pub index: usize,
    /// Steps since arrival.
    pub tau: u64,
    pub pos: Cell,
    /// Cell before the latest move.
    pub prev: Cell,
}

/// What happened during one step, for traces and reward recomputation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficStepRecord {
    pub t: usize,
    /// Cars present when the reward was computed.
    pub cars: Vec<Car>,
    pub actions: Vec<(usize, usize)>,
    pub exited: Vec<usize>,
    pub collisions: usize,
    pub tau_sum: u64,
    pub reward: f64,
    pub spawned: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TrafficJunction {
    config: TrafficConfig,
    junction: Arc<Junction>,
    cars: Vec<Car>,
    t: usize,
    collided: bool,
    done: bool,
    last: Option<TrafficStepRecord>,
}

impl TrafficJunction {
    pub fn new(config: TrafficConfig, junction: Arc<Junction>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            junction,
            cars: Vec::new(),
            t: 0,
            collided: false,
            done: false,
            last: None,
        })
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.config
    }

    pub fn junction(&self) -> &Junction {
        &self.junction
    }

    /// Live cars in ID order.
    pub fn cars(&self) -> &[Car] {
        &self.cars
    }

    pub fn last_record(&self) -> Option<&TrafficStepRecord> {
        self.last.as_ref()
    }

    pub fn collided(&self) -> bool {
        self.collided
    }

    /// Places a car directly; used by probes and tests.
    pub fn place_car(&mut self, id: usize, route: usize, index: usize) -> Result<()> {
        if id >= self.config.max_cars || self.cars.iter().any(|c| c.id == id) {
            return Err(Error::Env(format!("car slot {id} unavailable")));
        }
        let cells = self
            .junction
            .routes
            .get(route)
            .ok_or_else(|| Error::Env(format!("no route {route}")))?;
        let pos = *cells
            .get(index)
            .ok_or_else(|| Error::Env("route index out of range".into()))?;
        self.cars.push(Car {
            id,
            route,
            index,
            tau: 0,
            pos,
            prev: pos,
        });
        self.cars.sort_by_key(|c| c.id);
        Ok(())
    }

    fn block_width(&self) -> usize {
        self.config.max_cars + self.junction.cells() + self.junction.routes.len()
    }

    fn window(&self) -> usize {
        match self.config.vision {
            Some(v) => (2 * v + 1) * (2 * v + 1),
            None => 1,
        }
    }

    fn car_bits(&self, car: &Car, base: usize, out: &mut Vec<usize>) {
        let ncars = self.config.max_cars;
        out.push(base + car.id);
        out.push(base + ncars + self.junction.cell_index(car.pos));
        out.push(base + ncars + self.junction.cells() + car.route);
    }

    pub fn observe(&self, car: &Car) -> Observation {
        let block = self.block_width();
        let mut active = Vec::new();
        match self.config.vision {
            None => self.car_bits(car, 0, &mut active),
            Some(v) => {
                let v = v as i64;
                let mut k = 0;
                for dr in -v..=v {
                    for dc in -v..=v {
                        let cell = (car.pos.0 + dr, car.pos.1 + dc);
                        for other in self.cars.iter().filter(|o| o.pos == cell) {
                            self.car_bits(other, k * block, &mut active);
                        }
                        k += 1;
                    }
                }
            }
        }
        active.sort_unstable();
        active.dedup();
        Observation {
            dim: self.input_dim(),
            active,
        }
    }

    /// IDs in `held` were freed this step; they are reused only when no other
    /// slot is free, so a new car rarely inherits a recurrent state key.
    fn spawn(&mut self, rng: &mut Rng, held: &[usize]) -> Vec<usize> {
        let mut spawned = Vec::new();
        for (cell, routes) in &self.junction.arrivals {
            let u = rng.uniform();
            let pick = rng.below(routes.len().max(1));
            if u >= self.config.p_arrive || self.cars.len() >= self.config.car_limit {
                continue;
            }
            let Some(&route) = routes.get(pick) else {
                continue;
            };
            let free = |i: &usize| self.cars.iter().all(|c| c.id != *i);
            let id = (0..self.config.max_cars)
                .find(|i| free(i) && !held.contains(i))
                .or_else(|| (0..self.config.max_cars).find(free))
                .expect("car_limit <= max_cars leaves a free slot");
            self.cars.push(Car {
                id,
                route,
                index: 0,
                tau: 0,
                pos: *cell,
                prev: *cell,
            });
            self.cars.sort_by_key(|c| c.id);
            spawned.push(id);
        }
        spawned
    }
}

/// Unordered pairs of cars sharing a cell, plus pairs that swapped cells.
pub fn count_collisions(cars: &[Car], count_swaps: bool) -> usize {
    let mut n = 0;
    for i in 0..cars.len() {
        for j in i + 1..cars.len() {
            let (a, b) = (&cars[i], &cars[j]);
            if a.pos == b.pos || (count_swaps && a.pos == b.prev && b.pos == a.prev) {
                n += 1;
            }
        }
    }
    n
}

impl Environment for TrafficJunction {
    fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.cars.clear();
        self.t = 0;
        self.collided = false;
        self.done = false;
        self.last = None;
        self.spawn(rng, &[]);
        Ok(())
    }

    fn views(&self) -> Vec<AgentView> {
        if self.done {
            return Vec::new();
        }
        self.cars
            .iter()
            .map(|c| AgentView {
                slot: c.id,
                obs: self.observe(c),
                pos: Some(c.pos),
            })
            .collect()
    }

    fn capacity(&self) -> usize {
        self.config.max_cars
    }

    fn input_dim(&self) -> usize {
        self.window() * self.block_width()
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn step(&mut self, actions: &[usize], rng: &mut Rng) -> Result<StepResult> {
        if self.done {
            return Err(Error::Env("step after episode end".into()));
        }
        if actions.len() != self.cars.len() {
            return Err(Error::Env(format!(
                "{} actions for {} live cars",
                actions.len(),
                self.cars.len()
            )));
        }
        if let Some(&bad) = actions.iter().find(|&&a| a > BRAKE) {
            return Err(Error::Env(format!("invalid traffic action {bad}")));
        }
        let junction = Arc::clone(&self.junction);
        let mut taken = Vec::with_capacity(actions.len());
        for (car, &a) in self.cars.iter_mut().zip(actions) {
            taken.push((car.id, a));
            car.prev = car.pos;
            if a == GAS {
                car.index += 1;
                car.pos = junction.routes[car.route][car.index];
            }
            car.tau += 1;
        }
        let mut exited = Vec::new();
        self.cars.retain(|c| {
            let done = c.index + 1 == junction.routes[c.route].len();
            if done {
                exited.push(c.id);
            }
            !done
        });
        let collisions = count_collisions(&self.cars, self.config.count_swaps);
        let tau_sum: u64 = self.cars.iter().map(|c| c.tau).sum();
        let reward = collisions as f64 * self.config.r_coll + tau_sum as f64 * self.config.r_time;
        if collisions > 0 {
            self.collided = true;
        }
        let present = self.cars.clone();
        let spawned = self.spawn(rng, &exited);
        self.last = Some(TrafficStepRecord {
            t: self.t,
            cars: present,
            actions: taken,
            exited,
            collisions,
            tau_sum,
            reward,
            spawned,
        });
        self.t += 1;
        self.done = self.t >= self.config.max_steps;
        Ok(StepResult {
            reward,
            done: self.done,
            outcome: self.done.then_some(if self.collided {
                Outcome::Failure
            } else {
                Outcome::Success
            }),
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn metric(&self) -> f64 {
        if self.collided {
            1.0
        } else {
            0.0
        }
    }

    fn step_record(&self) -> serde_json::Value {
        serde_json::to_value(&self.last).expect("record serializes")
    }

    fn grid(&self) -> Option<(usize, usize)> {
        Some((self.junction.rows, self.junction.cols))
    }
}
