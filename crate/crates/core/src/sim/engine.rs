//! Slot-granular downlink engine. One tick is one slot of the finest
//! numerology present; a gNB of numerology mu owns every 2^(mu_max - mu)-th tick.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bler::oracle_bler;
use crate::channel::{
    path_loss_db, rayleigh_gain_db, snr_db, step_mobility, CqiHistory, MobilityState, Position, Shadowing,
};
use crate::error::{invalid, Result};
use crate::policy::{DecisionContext, Policy};
use crate::radio::{self, RbAllocation, DATA_RES_PER_RB, SUBCARRIERS_PER_RB};
use crate::selector::{inputs_digest, ClusterAssignment, GnbSnapshot};
use crate::sim::config::ScenarioConfig;
use crate::sim::harq::{harq_step, HarqProcess, HarqState};
use crate::sim::load::{step_background_load, BackgroundLoad};
use crate::sim::metrics::{collect_metrics, MemberStats, RunMetrics};

const STREAM_MOBILITY: u64 = 1;
const STREAM_SHADOWING: u64 = 2;
const STREAM_LOAD: u64 = 3;
const STREAM_CQI: u64 = 4;
const STREAM_UE_START: u64 = 5;
const STREAM_LINK_BASE: u64 = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Emit one JSON line per decision epoch.
    pub audit: bool,
    /// Emit one JSON line per transport-block transmission.
    pub events: bool,
    /// Replace the channel-driven per-attempt BLER with a constant.
    pub bler_override: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub decisions: u64,
    pub infeasible_decisions: u64,
    pub relaxed_decisions: u64,
    pub shortfall_decisions: u64,
    pub mean_degree: f64,
    pub offered_packets: u64,
    pub delivered_packets: u64,
    pub lost_packets: u64,
    pub in_flight_packets: u64,
    pub tb_transmissions: u64,
    pub tb_first_attempt_failures: u64,
    pub tb_decoded: u64,
    pub tb_lost: u64,
    /// Checks of offered = delivered + lost + in flight that failed.
    pub conservation_violations: u64,
    /// Grants or transmissions above the RBs they were allowed.
    pub rb_violations: u64,
    /// Transport blocks finishing outside 2..=2*max_attempts slots.
    pub latency_bracket_violations: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub per_gnb: Vec<MemberStats>,
    pub diagnostics: RunDiagnostics,
    pub audit: Vec<String>,
    pub events: Vec<String>,
}

struct Packet {
    gnb: usize,
    unplaced_bits: u64,
    outstanding_tbs: u32,
    placed_tick: u64,
    failed: bool,
}

struct Tb {
    id: u64,
    gnb: usize,
    mcs: usize,
    rbs: u32,
    segments: Vec<u64>,
    first_tick: u64,
    harq: HarqProcess,
}

#[derive(Clone, Copy)]
struct Grant {
    mcs: usize,
    rbs: u32,
}

struct GnbState {
    stride: u64,
    queue: VecDeque<u64>,
    queued_bits: u64,
    retx: VecDeque<(u64, Tb)>,
    grant: Option<Grant>,
    member: bool,
    cf: f64,
    wrr: f64,
    shadow: Shadowing,
    cqi: CqiHistory,
    mean_snr_db: f64,
    link_rng: ChaCha8Rng,
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

/// Fewest RBs whose transport block carries `bits` at `mcs`, capped at `max_rbs`.
fn rbs_for_bits(bits: u64, mcs: usize, max_rbs: u32, cfg: &ScenarioConfig) -> Result<u32> {
    let e = cfg.mcs_table.entry(mcs)?;
    let per_rb = DATA_RES_PER_RB * e.coding_rate * e.bits_per_symbol as f64;
    let mut a = ((bits as f64 / per_rb).ceil() as u32).clamp(1, max_rbs.max(1));
    while a < max_rbs && radio::tbs_bits(RbAllocation(a), mcs, &cfg.mcs_table)? < bits {
        a += 1;
    }
    Ok(a.min(max_rbs))
}

pub fn run_scenario(cfg: &ScenarioConfig, policy: &dyn Policy, seed: u64) -> Result<RunMetrics> {
    Ok(run_scenario_with(cfg, policy, seed, &RunOptions::default())?.metrics)
}

pub fn run_scenario_with(cfg: &ScenarioConfig, policy: &dyn Policy, seed: u64, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    if let Some(b) = opts.bler_override {
        if !(0.0..=1.0).contains(&b) {
            return invalid(format!("BLER override {b} outside [0,1]"));
        }
    }
    Engine::new(cfg, policy, seed, opts)?.run()
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    policy: &'a dyn Policy,
    opts: &'a RunOptions,
    tick_s: f64,
    ticks_per_epoch: u64,
    total_ticks: u64,
    packet_bits: u64,
    arrival_interval_s: f64,
    ue: MobilityState,
    load: BackgroundLoad,
    gnbs: Vec<GnbState>,
    pool: VecDeque<u64>,
    live: HashMap<u64, Packet>,
    done_events: BTreeMap<(u64, u64), Tb>,
    next_packet: u64,
    next_tb: u64,
    stats: Vec<MemberStats>,
    diag: RunDiagnostics,
    degree_sum: u64,
    audit: Vec<String>,
    events: Vec<String>,
    rng_mobility: ChaCha8Rng,
    rng_shadow: ChaCha8Rng,
    rng_load: ChaCha8Rng,
    rng_cqi: ChaCha8Rng,
    epochs_run: u64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig, policy: &'a dyn Policy, seed: u64, opts: &'a RunOptions) -> Result<Self> {
        let finest = cfg.finest_numerology();
        let tick_s = finest.slot_duration_s();
        let ticks_per_epoch = (cfg.epoch_s / tick_s).round() as u64;
        if ticks_per_epoch == 0 || ((ticks_per_epoch as f64 * tick_s) - cfg.epoch_s).abs() > 1e-9 {
            return invalid(format!("epoch {} s is not a whole number of {} s slots", cfg.epoch_s, tick_s));
        }
        let total_ticks = (cfg.duration_s / tick_s).round() as u64;
        let mut rng_start = stream(seed, STREAM_UE_START);
        let ue = match (cfg.ue_start, cfg.ue_mobile) {
            (Some(p), true) => MobilityState { position: p, ..MobilityState::random(cfg.area_side_m, &cfg.mobility, &mut rng_start) },
            (Some(p), false) => MobilityState::stationary(p),
            (None, true) => MobilityState::random(cfg.area_side_m, &cfg.mobility, &mut rng_start),
            (None, false) => MobilityState::stationary(Position::random(cfg.area_side_m, &mut rng_start)),
        };
        let mut rng_shadow = stream(seed, STREAM_SHADOWING);
        let mut rng_load = stream(seed, STREAM_LOAD);
        let load = BackgroundLoad::random(cfg.gnbs.len(), &cfg.load, &mut rng_load);
        let gnbs = cfg
            .gnbs
            .iter()
            .enumerate()
            .map(|(i, g)| GnbState {
                stride: 1u64 << (finest.mu() - g.numerology.mu()),
                queue: VecDeque::new(),
                queued_bits: 0,
                retx: VecDeque::new(),
                grant: None,
                member: false,
                cf: 0.0,
                wrr: 0.0,
                shadow: Shadowing::new(cfg.propagation.class(g.carrier).shadowing_sigma_db, ue.position, &mut rng_shadow),
                cqi: CqiHistory::new(cfg.cqi_history_len),
                mean_snr_db: f64::NEG_INFINITY,
                link_rng: stream(seed, STREAM_LINK_BASE + i as u64),
            })
            .collect();
        let packet_bits = cfg.packet_bytes as u64 * 8;
        Ok(Engine {
            cfg,
            policy,
            opts,
            tick_s,
            ticks_per_epoch,
            total_ticks,
            packet_bits,
            arrival_interval_s: packet_bits as f64 / cfg.qos.rate_req_bps,
            ue,
            load,
            gnbs,
            pool: VecDeque::new(),
            live: HashMap::new(),
            done_events: BTreeMap::new(),
            next_packet: 0,
            next_tb: 0,
            stats: vec![MemberStats::default(); cfg.gnbs.len()],
            diag: RunDiagnostics::default(),
            degree_sum: 0,
            audit: Vec::new(),
            events: Vec::new(),
            rng_mobility: stream(seed, STREAM_MOBILITY),
            rng_shadow,
            rng_load,
            rng_cqi: stream(seed, STREAM_CQI),
            epochs_run: 0,
        })
    }

    fn run(mut self) -> Result<RunOutput> {
        for _ in 0..self.cfg.warmup_epochs {
            self.evolve_channel();
        }
        for tick in 0..self.total_ticks {
            if tick % self.ticks_per_epoch == 0 {
                self.check_conservation();
                self.evolve_channel();
                self.decide(tick)?;
            }
            self.complete_blocks(tick);
            self.admit_arrivals(tick);
            for i in 0..self.gnbs.len() {
                if tick % self.gnbs[i].stride == 0 {
                    self.transmit(i, tick)?;
                }
            }
        }
        self.check_conservation();
        let duration = self.total_ticks as f64 * self.tick_s;
        let metrics = collect_metrics(&self.stats, duration, &self.cfg.qos, self.cfg.rate_score_tolerance);
        self.diag.in_flight_packets = self.live.values().filter(|p| !p.failed).count() as u64;
        self.diag.mean_degree = if self.diag.decisions > 0 { self.degree_sum as f64 / self.diag.decisions as f64 } else { 0.0 };
        Ok(RunOutput { metrics, per_gnb: self.stats, diagnostics: self.diag, audit: self.audit, events: self.events })
    }

    fn evolve_channel(&mut self) {
        let cfg = self.cfg;
        if cfg.ue_mobile {
            self.ue = step_mobility(&self.ue, cfg.epoch_s, cfg.area_side_m, &cfg.mobility, &mut self.rng_mobility);
        }
        let load_every = ((cfg.load.period_s / cfg.epoch_s).round() as u64).max(1);
        if self.epochs_run.is_multiple_of(load_every) {
            self.load = step_background_load(&self.load, &cfg.load, &mut self.rng_load);
        }
        self.epochs_run += 1;
        let prop = &cfg.propagation;
        for (g, st) in cfg.gnbs.iter().zip(self.gnbs.iter_mut()) {
            let sigma = prop.class(g.carrier).shadowing_sigma_db;
            st.shadow.update(sigma, prop.decorrelation_m, self.ue.position, &mut self.rng_shadow);
            let pl = path_loss_db(g, &self.ue.position, st.shadow.value_db, prop);
            st.mean_snr_db = snr_db(g, pl, g.power_level, prop);
            let noise: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut self.rng_cqi);
            let measured = snr_db(g, pl, 0, prop) + prop.cqi_measurement_sigma_db * noise;
            st.cqi.push(cfg.cqi_quantizer.cqi(measured));
        }
    }

    fn snapshots(&self) -> Vec<GnbSnapshot> {
        self.cfg
            .gnbs
            .iter()
            .zip(&self.gnbs)
            .enumerate()
            .map(|(i, (g, st))| GnbSnapshot {
                id: g.id,
                position: g.position,
                numerology: g.numerology,
                power_level: g.power_level,
                available_rbs: self.load.available(i, g.total_rbs),
                total_rbs: g.total_rbs,
                cqi: st.cqi.clone(),
                mean_snr_db: Some(st.mean_snr_db),
            })
            .collect()
    }

    fn decide(&mut self, tick: u64) -> Result<()> {
        let snaps = self.snapshots();
        let ctx = DecisionContext {
            snapshots: &snaps,
            ue_position: self.ue.position,
            req: &self.cfg.qos,
            selector: &self.cfg.selector,
            epoch_s: self.cfg.epoch_s,
            table: &self.cfg.mcs_table,
        };
        let decision = self.policy.decide(&ctx)?;
        let a = &decision.assignment;
        self.diag.decisions += 1;
        self.degree_sum += a.degree() as u64;
        self.diag.infeasible_decisions += u64::from(!a.feasible);
        self.diag.relaxed_decisions += u64::from(a.constraints_relaxed);
        self.diag.shortfall_decisions += u64::from(a.shortfall);
        if self.opts.audit {
            let line = json!({
                "epoch": tick / self.ticks_per_epoch,
                "time_s": tick as f64 * self.tick_s,
                "ue": self.ue.position,
                "inputs_digest": inputs_digest(&snaps, &self.cfg.qos),
                "cards": decision.cards,
                "assignment": a,
            });
            self.audit.push(line.to_string());
        }
        self.apply(a, &snaps);
        Ok(())
    }

    fn apply(&mut self, a: &ClusterAssignment, snaps: &[GnbSnapshot]) {
        let mut returned = Vec::new();
        for (i, st) in self.gnbs.iter_mut().enumerate() {
            let m = a.members.iter().find(|m| m.gnb_id == i);
            match m {
                Some(m) => {
                    if m.rbs > snaps[i].available_rbs {
                        self.diag.rb_violations += 1;
                    }
                    if !st.member {
                        st.wrr = 0.0;
                    }
                    st.member = m.rbs > 0;
                    st.cf = m.cf;
                    st.grant = (m.rbs > 0).then_some(Grant { mcs: m.mcs, rbs: m.rbs.min(snaps[i].available_rbs) });
                }
                None => {
                    if st.member {
                        // untouched packets go back to the CU; a started head drains here
                        let keep_head = st
                            .queue
                            .front()
                            .is_some_and(|id| self.live.get(id).is_some_and(|p| p.unplaced_bits < self.packet_bits));
                        let head = if keep_head { st.queue.pop_front() } else { None };
                        returned.extend(st.queue.drain(..));
                        st.queued_bits = head.and_then(|id| self.live.get(&id)).map_or(0, |p| p.unplaced_bits);
                        st.queue.extend(head);
                    }
                    st.member = false;
                    st.cf = 0.0;
                    st.grant = st.grant.map(|g| Grant { rbs: g.rbs.min(snaps[i].available_rbs), ..g }).filter(|g| g.rbs > 0);
                }
            }
        }
        returned.sort_unstable();
        let mut pending: Vec<u64> = self.pool.drain(..).collect();
        pending.extend(returned);
        pending.sort_unstable();
        for id in pending {
            self.dispatch(id);
        }
    }

    /// Smooth weighted round robin over members by participation factor.
    fn dispatch(&mut self, id: u64) {
        let total: f64 = self.gnbs.iter().filter(|s| s.member).map(|s| s.cf).sum();
        let mut best: Option<(usize, f64)> = None;
        for (i, st) in self.gnbs.iter_mut().enumerate().filter(|(_, s)| s.member) {
            st.wrr += st.cf;
            if best.is_none_or(|(_, w)| st.wrr > w) {
                best = Some((i, st.wrr));
            }
        }
        if let Some((i, _)) = best {
            self.gnbs[i].wrr -= total;
        }
        self.route(id, best.map(|(i, _)| i));
    }

    fn route(&mut self, id: u64, to: Option<usize>) {
        match to {
            Some(i) => {
                if let Some(p) = self.live.get_mut(&id) {
                    p.gnb = i;
                }
                self.gnbs[i].queued_bits += self.live.get(&id).map_or(0, |p| p.unplaced_bits);
                self.gnbs[i].queue.push_back(id);
            }
            None => self.pool.push_back(id),
        }
    }

    fn admit_arrivals(&mut self, tick: u64) {
        let now = tick as f64 * self.tick_s;
        while self.next_packet as f64 * self.arrival_interval_s <= now + 1e-12 {
            let id = self.next_packet;
            self.next_packet += 1;
            self.diag.offered_packets += 1;
            self.live.insert(id, Packet { gnb: usize::MAX, unplaced_bits: self.packet_bits, outstanding_tbs: 0, placed_tick: 0, failed: false });
            self.dispatch(id);
        }
    }

    fn transmit(&mut self, i: usize, tick: u64) -> Result<()> {
        if self.gnbs[i].retx.front().is_some_and(|(due, _)| *due == tick) {
            let (_, tb) = self.gnbs[i].retx.pop_front().expect("checked");
            return self.attempt(tb, tick);
        }
        let Some(grant) = self.gnbs[i].grant else {
            return Ok(());
        };
        if self.gnbs[i].queue.is_empty() {
            return Ok(());
        }
        let queued = self.gnbs[i].queued_bits;
        let cap_full = radio::tbs_bits(RbAllocation(grant.rbs), grant.mcs, &self.cfg.mcs_table)?;
        let rbs = if queued >= cap_full { grant.rbs } else { rbs_for_bits(queued, grant.mcs, grant.rbs, self.cfg)? };
        if rbs > grant.rbs {
            self.diag.rb_violations += 1;
        }
        let mut cap = radio::tbs_bits(RbAllocation(rbs), grant.mcs, &self.cfg.mcs_table)?;
        let mut segments = Vec::new();
        while cap > 0 {
            let Some(&id) = self.gnbs[i].queue.front() else { break };
            let p = self.live.get_mut(&id).expect("queued packets are live");
            let take = p.unplaced_bits.min(cap);
            p.unplaced_bits -= take;
            p.outstanding_tbs += 1;
            cap -= take;
            self.gnbs[i].queued_bits -= take;
            segments.push(id);
            if p.unplaced_bits == 0 {
                p.placed_tick = tick;
                self.gnbs[i].queue.pop_front();
            }
        }
        if segments.is_empty() {
            return Ok(());
        }
        let tb = Tb {
            id: self.next_tb,
            gnb: i,
            mcs: grant.mcs,
            rbs,
            segments,
            first_tick: tick,
            harq: HarqProcess::new(self.next_tb, self.cfg.harq_max_attempts),
        };
        self.next_tb += 1;
        self.attempt(tb, tick)
    }

    fn attempt(&mut self, mut tb: Tb, tick: u64) -> Result<()> {
        let g = &self.cfg.gnbs[tb.gnb];
        let st = &mut self.gnbs[tb.gnb];
        let fade = if self.cfg.propagation.fading { rayleigh_gain_db(&mut st.link_rng) } else { 0.0 };
        let u: f64 = st.link_rng.random();
        let p = match self.opts.bler_override {
            Some(b) => b,
            None => oracle_bler(st.mean_snr_db + fade, tb.mcs, g.numerology, &self.cfg.oracle)?,
        };
        let ok = u >= p;
        let first = tb.harq.attempts == 0;
        tb.harq = harq_step(tb.harq, ok);
        self.diag.tb_transmissions += 1;
        self.diag.tb_first_attempt_failures += u64::from(first && !ok);
        self.stats[tb.gnb].bandwidth_time +=
            tb.rbs as f64 * SUBCARRIERS_PER_RB * g.numerology.scs_hz() * g.numerology.slot_duration_s();
        if self.opts.events {
            self.events.push(
                json!({"tick": tick, "gnb": tb.gnb, "tb": tb.id, "attempt": tb.harq.attempts, "ok": ok, "rbs": tb.rbs, "mcs": tb.mcs})
                    .to_string(),
            );
        }
        let due = tick + 2 * st.stride;
        match tb.harq.state {
            HarqState::Pending => st.retx.push_back((due, tb)),
            _ => {
                let key = (due, tb.id);
                self.done_events.insert(key, tb);
            }
        }
        Ok(())
    }

    fn complete_blocks(&mut self, tick: u64) {
        while let Some(entry) = self.done_events.first_entry() {
            if entry.key().0 > tick {
                break;
            }
            let tb = entry.remove();
            let slots = (tick - tb.first_tick) / self.gnbs[tb.gnb].stride;
            if slots < 2 || slots > 2 * self.cfg.harq_max_attempts as u64 {
                self.diag.latency_bracket_violations += 1;
            }
            let decoded = tb.harq.state == HarqState::Decoded;
            if decoded {
                self.diag.tb_decoded += 1;
            } else {
                self.diag.tb_lost += 1;
            }
            for id in tb.segments {
                let Some(p) = self.live.get_mut(&id) else { continue };
                p.outstanding_tbs -= 1;
                if !decoded && !p.failed {
                    p.failed = true;
                    self.stats[p.gnb].lost_packets += 1;
                    self.diag.lost_packets += 1;
                }
                if p.outstanding_tbs == 0 && p.unplaced_bits == 0 {
                    if !p.failed {
                        let s = &mut self.stats[p.gnb];
                        s.delivered_packets += 1;
                        s.delivered_bits += self.packet_bits;
                        s.latency_sum_s += (tick - p.placed_tick) as f64 * self.tick_s;
                        self.diag.delivered_packets += 1;
                    }
                    self.live.remove(&id);
                }
            }
        }
    }

    fn check_conservation(&mut self) {
        let in_flight = self.live.values().filter(|p| !p.failed).count() as u64;
        let placed_all = self.live.values().filter(|p| p.unplaced_bits == 0).count();
        let queued: usize = self.pool.len() + self.gnbs.iter().map(|s| s.queue.len()).sum::<usize>();
        let counts_ok = self.diag.offered_packets == self.diag.delivered_packets + self.diag.lost_packets + in_flight;
        let places_ok = self.live.len() == queued + placed_all;
        if !(counts_ok && places_ok) {
            self.diag.conservation_violations += 1;
        }
    }
}
