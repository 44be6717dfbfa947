use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Rng, Tensor, Var, ZERO_FILL};

use super::comm::CommGraph;
use super::config::{CellKind, ControllerConfig, ControllerKind, EncoderKind};
use super::input::{row_ids, Group, RowId};
use super::params::ParamStore;

/// Source of discrete communication symbols.
pub enum Symbols<'a> {
    /// Controllers that never emit symbols.
    None,
    /// Sample, one stream per group of the batch.
    Sample(&'a mut [Rng]),
    /// Reuse recorded symbols, indexed `[comm step][row]`.
    Replay(&'a [Vec<usize>]),
}

/// Recurrent state on a graph, keyed by `(group key, slot)`.
#[derive(Clone, Debug)]
pub struct GraphCarry {
    pub keys: Vec<(usize, usize)>,
    pub h: Var,
    pub mem: Option<Var>,
}

/// Recurrent state between value-level forward calls.
#[derive(Clone, Debug, PartialEq)]
pub struct CarriedState {
    pub keys: Vec<(usize, usize)>,
    pub h: Tensor,
    pub mem: Option<Tensor>,
}

impl CarriedState {
    fn bind(&self, g: &mut Graph) -> Result<GraphCarry> {
        Ok(GraphCarry {
            keys: self.keys.clone(),
            h: g.constant(self.h.clone())?,
            mem: self.mem.clone().map(|m| g.constant(m)).transpose()?,
        })
    }
}

/// Hidden state entering one communication step, and what it broadcasts.
#[derive(Clone, Debug, PartialEq)]
pub struct CommRecord {
    pub h: Tensor,
    /// `h · C` for continuous communication.
    pub comm: Option<Tensor>,
}

/// Forward result on a graph.
#[derive(Debug)]
pub struct GraphOutput {
    pub rows: Vec<RowId>,
    /// Per decoder head, `[rows × actions]` log-probabilities.
    pub log_probs: Vec<Var>,
    /// `[rows × 1]` per-agent baseline predictions.
    pub baseline: Var,
    /// `[rows]` log-probability of the emitted symbols, summed over steps.
    pub symbol_log_prob: Option<Var>,
    /// Emitted symbols, `[comm step][row]`.
    pub symbols: Vec<Vec<usize>>,
    pub carry: Option<GraphCarry>,
    pub records: Vec<CommRecord>,
    /// Final hidden layer (per agent, or per group for the fully-connected model).
    pub hidden: Var,
}

/// Forward result as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub rows: Vec<RowId>,
    pub probs: Vec<Tensor>,
    pub baseline: Vec<f64>,
    pub symbols: Vec<Vec<usize>>,
    pub records: Vec<CommRecord>,
    pub hidden: Tensor,
}

impl PolicyOutput {
    /// Mean baseline over the agents of each group.
    pub fn group_baselines(&self, groups: usize) -> Vec<f64> {
        let mut sum = vec![0.0; groups];
        let mut count = vec![0usize; groups];
        for (r, b) in self.rows.iter().zip(&self.baseline) {
            sum[r.group] += b;
            count[r.group] += 1;
        }
        sum.iter()
            .zip(&count)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    }
}

enum Init {
    Gaussian,
    Zero,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn weight(name: String, shape: [usize; 2]) -> ParamSpec {
    ParamSpec {
        name,
        shape: shape.to_vec(),
        init: Init::Gaussian,
    }
}

fn bias(name: String, n: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape: vec![n],
        init: Init::Zero,
    }
}

fn param_specs(c: &ControllerConfig, fc_width: usize) -> Vec<ParamSpec> {
    let d = c.hidden;
    let mut out = Vec::new();
    match c.encoder {
        EncoderKind::Lookup => out.push(weight("enc.table".into(), [c.input_dim, d])),
        EncoderKind::OneHotLinear => {
            out.push(weight("enc.w".into(), [c.input_dim, d]));
            out.push(bias("enc.b".into(), d));
        }
    }
    if c.kind == ControllerKind::FullyConnected {
        let (n, w) = (c.agents * d, fc_width);
        match c.cell {
            CellKind::Mlp => {
                out.push(weight("fc.w1".into(), [n, w]));
                out.push(bias("fc.b1".into(), w));
                out.push(weight("fc.w2".into(), [w, w]));
                out.push(bias("fc.b2".into(), w));
            }
            CellKind::Rnn | CellKind::Lstm => {
                let gates = if c.cell == CellKind::Lstm { 4 } else { 1 };
                out.push(weight("fc.h".into(), [w, gates * w]));
                out.push(weight("fc.x".into(), [n, gates * w]));
                out.push(bias("fc.b".into(), gates * w));
            }
        }
        for (k, &a) in c.action_heads.iter().enumerate() {
            out.push(weight(format!("fc.head{k}.w"), [w, c.agents * a]));
            out.push(bias(format!("fc.head{k}.b"), c.agents * a));
        }
        out.push(weight("fc.baseline.w".into(), [w, c.agents]));
        out.push(bias("fc.baseline.b".into(), c.agents));
        return out;
    }
    let cw = c.comm_width();
    match c.cell {
        CellKind::Mlp => {
            for i in 0..c.comm_steps {
                out.push(weight(format!("step{i}.h"), [d, d]));
                if let Some(cw) = cw {
                    out.push(weight(format!("step{i}.c"), [cw, d]));
                }
                if c.skip {
                    out.push(weight(format!("step{i}.skip"), [d, d]));
                }
                out.push(bias(format!("step{i}.b"), d));
                if c.mlp_depth == 2 {
                    out.push(weight(format!("step{i}.h2"), [d, d]));
                    out.push(bias(format!("step{i}.b2"), d));
                }
            }
        }
        CellKind::Rnn | CellKind::Lstm => {
            let (p, gates) = if c.cell == CellKind::Lstm {
                ("lstm", 4)
            } else {
                ("rnn", 1)
            };
            out.push(weight(format!("{p}.h"), [d, gates * d]));
            if let Some(cw) = cw {
                out.push(weight(format!("{p}.c"), [cw, gates * d]));
            }
            out.push(weight(format!("{p}.x"), [d, gates * d]));
            out.push(bias(format!("{p}.b"), gates * d));
        }
    }
    if c.kind == ControllerKind::DiscreteComm {
        let v = c.vocab_size();
        if c.cell.is_recurrent() {
            out.push(weight("sym.w".into(), [d, v]));
        } else {
            for i in 0..c.comm_steps {
                out.push(weight(format!("sym{i}.w"), [d, v]));
            }
        }
    }
    for (k, &a) in c.action_heads.iter().enumerate() {
        out.push(weight(format!("head{k}.w"), [d, a]));
        out.push(bias(format!("head{k}.b"), a));
    }
    out.push(weight("baseline.w".into(), [d, 1]));
    out.push(bias("baseline.b".into(), 1));
    out
}

/// Scalar parameter count of a configuration.
pub fn param_count(config: &ControllerConfig) -> Result<usize> {
    config.validate()?;
    let w = resolve_fc_width(config)?;
    Ok(param_specs(config, w)
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum())
}

/// Hidden width of the fully-connected model: the configured one, or the
/// width whose parameter count is closest to the CommNet with the same cell,
/// encoder and heads.
pub fn resolve_fc_width(config: &ControllerConfig) -> Result<usize> {
    if config.kind != ControllerKind::FullyConnected {
        return Ok(0);
    }
    if let Some(w) = config.fc_width {
        return Ok(w);
    }
    let mut reference = config.clone();
    reference.kind = ControllerKind::CommNet;
    reference.fc_width = None;
    let target = param_count(&reference)? as f64;
    let count = |w: usize| -> f64 {
        param_specs(config, w)
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum::<usize>() as f64
    };
    let mut best = (1, f64::INFINITY);
    for w in 1..=1 << 14 {
        let gap = (count(w) - target).abs();
        if gap < best.1 {
            best = (w, gap);
        }
        if count(w) > target {
            break;
        }
    }
    Ok(best.0)
}

/// A communication controller: encoder, communication cells, decoders.
#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    config: ControllerConfig,
    params: ParamStore,
    fc_width: usize,
}

impl Controller {
    /// Weights and tables drawn from `N(0, init_std)`, biases zero.
    pub fn new(config: ControllerConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let fc_width = resolve_fc_width(&config)?;
        let mut params = ParamStore::new();
        for spec in param_specs(&config, fc_width) {
            match spec.init {
                Init::Gaussian => {
                    params.insert_gaussian(spec.name, &spec.shape, config.init_std, rng)?
                }
                Init::Zero => params.insert(spec.name, Tensor::zeros(&spec.shape))?,
            };
        }
        Ok(Self {
            config,
            params,
            fc_width,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn fc_width(&self) -> usize {
        self.fc_width
    }

    fn bind(&self, g: &mut Graph, name: &str) -> Result<Var> {
        let id = self.params.require(name)?;
        g.param(id, self.params.value(id))
    }

    /// `Σ x · W + b` over `(input, weight name)` terms.
    fn linear(&self, g: &mut Graph, terms: &[(Var, &str)], bias: &str) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for &(x, name) in terms {
            let w = self.bind(g, name)?;
            let y = g.matmul(x, w)?;
            acc = Some(match acc {
                None => y,
                Some(a) => g.add(a, y)?,
            });
        }
        let acc = acc.ok_or_else(|| Error::Model("linear layer without inputs".into()))?;
        let b = self.bind(g, bias)?;
        g.add_row(acc, b)
    }

    /// Encoder output `h⁰`, one row per agent.
    pub fn encode(&self, g: &mut Graph, batch: &[Group]) -> Result<Var> {
        let c = &self.config;
        let mut bags = Vec::new();
        for group in batch {
            for a in &group.agents {
                if a.obs.dim != c.input_dim {
                    return Err(Error::Model(format!(
                        "observation width {} but encoder expects {}",
                        a.obs.dim, c.input_dim
                    )));
                }
                if c.encoder == EncoderKind::Lookup && a.obs.active.len() != 1 {
                    return Err(Error::Model(
                        "lookup encoder needs exactly one active index".into(),
                    ));
                }
                bags.push(a.obs.active.clone());
            }
        }
        let bags = Arc::new(bags);
        match c.encoder {
            EncoderKind::Lookup => {
                let table = self.bind(g, "enc.table")?;
                g.embedding_bag(table, bags)
            }
            EncoderKind::OneHotLinear => {
                let w = self.bind(g, "enc.w")?;
                let e = g.embedding_bag(w, bags)?;
                let b = self.bind(g, "enc.b")?;
                g.add_row(e, b)
            }
        }
    }

    /// Forward pass recorded on `g`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        batch: &[Group],
        carry: Option<&GraphCarry>,
        symbols: Symbols<'_>,
        record: bool,
    ) -> Result<GraphOutput> {
        let rows = row_ids(batch)?;
        if rows.is_empty() {
            return Err(Error::Model("forward over an empty batch".into()));
        }
        let h0 = self.encode(g, batch)?;
        if self.config.kind == ControllerKind::FullyConnected {
            self.fc_forward(g, batch, rows, h0, carry)
        } else {
            self.agent_forward(g, batch, rows, h0, carry, symbols, record)
        }
    }

    /// Forward pass on plain values; recurrent state is passed in and out.
    pub fn forward(
        &self,
        batch: &[Group],
        state: Option<&CarriedState>,
        symbols: Symbols<'_>,
        record: bool,
    ) -> Result<(PolicyOutput, Option<CarriedState>)> {
        let mut g = Graph::new();
        let carry = state.map(|s| s.bind(&mut g)).transpose()?;
        let out = self.forward_graph(&mut g, batch, carry.as_ref(), symbols, record)?;
        let probs = out
            .log_probs
            .iter()
            .map(|&lp| g.value(lp).map(f64::exp))
            .collect();
        let next = out.carry.as_ref().map(|c| CarriedState {
            keys: c.keys.clone(),
            h: g.value(c.h).clone(),
            mem: c.mem.map(|m| g.value(m).clone()),
        });
        let policy = PolicyOutput {
            baseline: g.value(out.baseline).data().to_vec(),
            hidden: g.value(out.hidden).clone(),
            rows: out.rows,
            probs,
            symbols: out.symbols,
            records: out.records,
        };
        Ok((policy, next))
    }

    fn carried(
        &self,
        g: &mut Graph,
        carry: Option<&GraphCarry>,
        keys: &[(usize, usize)],
        width: usize,
        lstm: bool,
    ) -> Result<(Var, Option<Var>)> {
        let n = keys.len();
        let Some(carry) = carry else {
            let h = g.constant(Tensor::zeros(&[n, width]))?;
            let mem = if lstm {
                Some(g.constant(Tensor::zeros(&[n, width]))?)
            } else {
                None
            };
            return Ok((h, mem));
        };
        let index: HashMap<(usize, usize), usize> = carry
            .keys
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i))
            .collect();
        let mut map = Vec::with_capacity(n * width);
        for key in keys {
            match index.get(key) {
                Some(&p) => map.extend((0..width).map(|c| p * width + c)),
                None => map.extend(std::iter::repeat_n(ZERO_FILL, width)),
            }
        }
        let map = Arc::new(map);
        let h = g.gather(carry.h, Arc::clone(&map), vec![n, width])?;
        let mem = match (lstm, carry.mem) {
            (true, Some(m)) => Some(g.gather(m, map, vec![n, width])?),
            (true, None) => Some(g.constant(Tensor::zeros(&[n, width]))?),
            (false, _) => None,
        };
        Ok((h, mem))
    }

    fn lstm_gates(&self, g: &mut Graph, gates: Var, mem: Var, width: usize) -> Result<(Var, Var)> {
        let i = g.slice_cols(gates, 0, width)?;
        let f = g.slice_cols(gates, width, 2 * width)?;
        let o = g.slice_cols(gates, 2 * width, 3 * width)?;
        let u = g.slice_cols(gates, 3 * width, 4 * width)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let o = g.sigmoid(o)?;
        let u = g.tanh(u)?;
        let keep = g.mul(f, mem)?;
        let write = g.mul(i, u)?;
        let mem = g.add(keep, write)?;
        let squashed = g.tanh(mem)?;
        let h = g.mul(o, squashed)?;
        Ok((h, mem))
    }

    #[allow(clippy::too_many_arguments)]
    fn agent_forward(
        &self,
        g: &mut Graph,
        batch: &[Group],
        rows: Vec<RowId>,
        h0: Var,
        carry: Option<&GraphCarry>,
        mut symbols: Symbols<'_>,
        record: bool,
    ) -> Result<GraphOutput> {
        let c = &self.config;
        let d = c.hidden;
        let act = c.activation;
        let comm_graph = match c.kind {
            ControllerKind::CommNet | ControllerKind::DiscreteComm => {
                Some(CommGraph::build(batch, c.local_range)?)
            }
            _ => None,
        };
        let mix = comm_graph.as_ref().map(|cg| Arc::new(cg.mean_mix()));
        let keys: Vec<(usize, usize)> = rows
            .iter()
            .map(|r| (batch[r.group].key, batch[r.group].agents[r.agent].slot))
            .collect();

        let (mut h, mut mem) = if c.cell.is_recurrent() {
            self.carried(g, carry, &keys, d, c.cell == CellKind::Lstm)?
        } else {
            (h0, None)
        };

        let mut records = Vec::new();
        let mut symbol_lp: Option<Var> = None;
        let mut emitted = Vec::new();
        for i in 0..c.comm_steps {
            let prefix = match c.cell {
                CellKind::Mlp => format!("step{i}"),
                CellKind::Rnn => "rnn".to_string(),
                CellKind::Lstm => "lstm".to_string(),
            };
            let c_name = format!("{prefix}.c");
            let comm = match c.kind {
                ControllerKind::CommNet => {
                    let mix = mix.clone().expect("built for CommNet");
                    Some(g.mix(h, mix)?)
                }
                ControllerKind::DiscreteComm => {
                    let cg = comm_graph.as_ref().expect("built for DiscreteComm");
                    let (cvar, lp, syms) = self.discrete_comm(g, h, i, cg, &rows, &mut symbols)?;
                    symbol_lp = Some(match symbol_lp {
                        None => lp,
                        Some(prev) => g.add(prev, lp)?,
                    });
                    emitted.push(syms);
                    Some(cvar)
                }
                _ => None,
            };
            if record {
                let hv = g.value(h).clone();
                let broadcast = match c.kind {
                    ControllerKind::CommNet => {
                        let cm = self.params.value(self.params.require(&c_name)?);
                        Some(hv.matmul(cm)?)
                    }
                    _ => None,
                };
                records.push(CommRecord {
                    h: hv,
                    comm: broadcast,
                });
            }

            let h_name = format!("{prefix}.h");
            let mut terms: Vec<(Var, &str)> = vec![(h, &h_name)];
            if let Some(cv) = comm {
                terms.push((cv, &c_name));
            }
            let skip_name = match c.cell {
                CellKind::Mlp => format!("{prefix}.skip"),
                _ => format!("{prefix}.x"),
            };
            if c.skip || c.cell.is_recurrent() {
                terms.push((h0, &skip_name));
            }
            let pre = self.linear(g, &terms, &format!("{prefix}.b"))?;
            match c.cell {
                CellKind::Mlp => {
                    h = g.activation(pre, act)?;
                    if c.mlp_depth == 2 {
                        let pre2 = self.linear(
                            g,
                            &[(h, &format!("{prefix}.h2"))],
                            &format!("{prefix}.b2"),
                        )?;
                        h = g.activation(pre2, act)?;
                    }
                }
                CellKind::Rnn => h = g.activation(pre, act)?,
                CellKind::Lstm => {
                    let m = mem.expect("lstm state initialised");
                    let (nh, nm) = self.lstm_gates(g, pre, m, d)?;
                    h = nh;
                    mem = Some(nm);
                }
            }
        }

        let (logits, baseline) = self.decode(g, h, "")?;
        let log_probs = logits
            .into_iter()
            .map(|l| g.log_softmax_rows(l))
            .collect::<Result<Vec<_>>>()?;
        let carry_out = c.cell.is_recurrent().then_some(GraphCarry { keys, h, mem });
        Ok(GraphOutput {
            rows,
            log_probs,
            baseline,
            symbol_log_prob: symbol_lp,
            symbols: emitted,
            carry: carry_out,
            records,
            hidden: h,
        })
    }

    /// Raw decoder logits per head and the baseline column.
    fn decode(&self, g: &mut Graph, h: Var, prefix: &str) -> Result<(Vec<Var>, Var)> {
        let mut logits = Vec::new();
        for k in 0..self.config.action_heads.len() {
            logits.push(self.linear(
                g,
                &[(h, &format!("{prefix}head{k}.w"))],
                &format!("{prefix}head{k}.b"),
            )?);
        }
        let baseline = self.linear(
            g,
            &[(h, &format!("{prefix}baseline.w"))],
            &format!("{prefix}baseline.b"),
        )?;
        Ok((logits, baseline))
    }

    #[allow(clippy::too_many_arguments)]
    fn discrete_comm(
        &self,
        g: &mut Graph,
        h: Var,
        step: usize,
        cg: &CommGraph,
        rows: &[RowId],
        symbols: &mut Symbols<'_>,
    ) -> Result<(Var, Var, Vec<usize>)> {
        let v = self.config.vocab_size();
        let name = if self.config.cell.is_recurrent() {
            "sym.w".to_string()
        } else {
            format!("sym{step}.w")
        };
        let dw = self.bind(g, &name)?;
        let logits = g.matmul(h, dw)?;
        let lp = g.log_softmax_rows(logits)?;
        let n = rows.len();
        let syms: Vec<usize> = match symbols {
            Symbols::Sample(rngs) => {
                let table = g.value(lp);
                let mut out = Vec::with_capacity(n);
                for (r, row) in rows.iter().enumerate() {
                    let rng = rngs.get_mut(row.group).ok_or_else(|| {
                        Error::Model("one symbol stream is needed per group".into())
                    })?;
                    let weights: Vec<f64> = table.row(r).iter().map(|x| x.exp()).collect();
                    out.push(rng.categorical(&weights)?);
                }
                out
            }
            Symbols::Replay(recorded) => {
                let s = recorded
                    .get(step)
                    .ok_or_else(|| Error::Model(format!("no recorded symbols for step {step}")))?;
                if s.len() != n || s.iter().any(|&x| x >= v) {
                    return Err(Error::Model("recorded symbols do not fit the batch".into()));
                }
                s.clone()
            }
            Symbols::None => {
                return Err(Error::Model(
                    "discrete communication needs a symbol source".into(),
                ))
            }
        };
        let picked = g.pick(
            lp,
            syms.iter().enumerate().map(|(r, &s)| r * v + s).collect(),
        )?;
        let mut bag = Tensor::zeros(&[n, v]);
        for j in 0..n {
            for &k in cg.neighbors(j) {
                bag.set(j, syms[k], 1.0);
            }
        }
        let bag = g.constant(bag)?;
        Ok((bag, picked, syms))
    }

    fn fc_forward(
        &self,
        g: &mut Graph,
        batch: &[Group],
        rows: Vec<RowId>,
        h0: Var,
        carry: Option<&GraphCarry>,
    ) -> Result<GraphOutput> {
        let c = &self.config;
        let (d, j, w) = (c.hidden, c.agents, self.fc_width);
        let groups = batch.len();
        for group in batch {
            if group.capacity != j {
                return Err(Error::Model(format!(
                    "fully-connected controller built for {} agents, group has capacity {}",
                    j, group.capacity
                )));
            }
        }
        // Concatenate encodings by slot; empty slots stay zero.
        let mut map = vec![ZERO_FILL; groups * j * d];
        for (r, row) in rows.iter().enumerate() {
            let slot = batch[row.group].agents[row.agent].slot;
            let base = row.group * j * d + slot * d;
            for col in 0..d {
                map[base + col] = r * d + col;
            }
        }
        let x = g.gather(h0, Arc::new(map), vec![groups, j * d])?;
        let act = c.activation;
        let keys: Vec<(usize, usize)> = batch.iter().map(|gr| (gr.key, 0)).collect();
        let (z, carry_out) = match c.cell {
            CellKind::Mlp => {
                let z = self.linear(g, &[(x, "fc.w1")], "fc.b1")?;
                let z = g.activation(z, act)?;
                let z = self.linear(g, &[(z, "fc.w2")], "fc.b2")?;
                (g.activation(z, act)?, None)
            }
            CellKind::Rnn | CellKind::Lstm => {
                let lstm = c.cell == CellKind::Lstm;
                let (mut z, mut mem) = self.carried(g, carry, &keys, w, lstm)?;
                for _ in 0..c.comm_steps {
                    let pre = self.linear(g, &[(z, "fc.h"), (x, "fc.x")], "fc.b")?;
                    if lstm {
                        let (nz, nm) = self.lstm_gates(g, pre, mem.expect("lstm"), w)?;
                        z = nz;
                        mem = Some(nm);
                    } else {
                        z = g.activation(pre, act)?;
                    }
                }
                (z, Some(GraphCarry { keys, h: z, mem }))
            }
        };
        let (group_logits, group_baseline) = self.decode(g, z, "fc.")?;
        let slots: Vec<(usize, usize)> = rows
            .iter()
            .map(|r| (r.group, batch[r.group].agents[r.agent].slot))
            .collect();
        let mut log_probs = Vec::new();
        for (k, &a) in c.action_heads.iter().enumerate() {
            let map: Vec<usize> = slots
                .iter()
                .flat_map(|&(gi, s)| (0..a).map(move |col| gi * j * a + s * a + col))
                .collect();
            let logits = g.gather(group_logits[k], Arc::new(map), vec![rows.len(), a])?;
            log_probs.push(g.log_softmax_rows(logits)?);
        }
        let map: Vec<usize> = slots.iter().map(|&(gi, s)| gi * j + s).collect();
        let baseline = g.gather(group_baseline, Arc::new(map), vec![rows.len(), 1])?;
        Ok(GraphOutput {
            rows,
            log_probs,
            baseline,
            symbol_log_prob: None,
            symbols: Vec::new(),
            carry: carry_out,
            records: Vec::new(),
            hidden: z,
        })
    }
}
