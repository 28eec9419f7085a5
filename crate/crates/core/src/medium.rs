//! Shared CAN buses and full-duplex Ethernet links.
//!
//! Media only do occupancy bookkeeping: queues, arbitration and busy
//! intervals. Durations come from [`crate::timing`]; delivery is the
//! engine's job. `M` is whatever the caller wants to travel with a frame.

use std::collections::{BTreeMap, VecDeque};

use crate::codec::{BusFrame, EthernetFrame};
use crate::time::SimTime;
use crate::timing::{self, CanXlTimingParams, EthernetTimingParams};

/// Opaque station handle assigned by the owner of the medium.
pub type StationId = usize;

/// Two or more stations started the same priority at the same instant.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("priority clash on 0x{priority:03x} between stations {stations:?}")]
pub struct PriorityClash {
    pub priority: u16,
    pub stations: Vec<StationId>,
}

/// Bitwise arbitration over `(station, priority)` pairs: the lowest value
/// wins. Ties at the winning value cannot be resolved by CAN.
pub fn arbitrate(contenders: &[(StationId, u16)]) -> Result<Option<StationId>, PriorityClash> {
    let Some(best) = contenders.iter().map(|&(_, p)| p).min() else {
        return Ok(None);
    };
    let winners: Vec<StationId> = contenders
        .iter()
        .filter(|&&(_, p)| p == best)
        .map(|&(s, _)| s)
        .collect();
    if winners.len() > 1 {
        return Err(PriorityClash {
            priority: best,
            stations: winners,
        });
    }
    Ok(Some(winners[0]))
}

#[derive(Debug, Clone)]
pub struct Transmission<F, M> {
    pub sender: StationId,
    pub frame: F,
    pub meta: M,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug)]
pub enum BusAttempt<M> {
    Started(Transmission<BusFrame, M>),
    /// The frames of all clashing stations, removed from their queues.
    Clash {
        clash: PriorityClash,
        dropped: Vec<(StationId, BusFrame, M)>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MediumStats {
    pub frames: u64,
    pub busy: SimTime,
    pub clashes: u64,
}

#[derive(Debug)]
struct Queued<M> {
    frame: BusFrame,
    meta: M,
    order: u64,
}

#[derive(Debug)]
pub struct CanBus<M> {
    pub timing: CanXlTimingParams,
    stations: Vec<StationId>,
    queues: BTreeMap<StationId, Vec<Queued<M>>>,
    busy_until: SimTime,
    in_flight: bool,
    next_order: u64,
    pub stats: MediumStats,
}

impl<M> CanBus<M> {
    pub fn new(timing: CanXlTimingParams) -> Self {
        CanBus {
            timing,
            stations: Vec::new(),
            queues: BTreeMap::new(),
            busy_until: SimTime::ZERO,
            in_flight: false,
            next_order: 0,
            stats: MediumStats::default(),
        }
    }

    pub fn attach(&mut self, station: StationId) {
        if !self.stations.contains(&station) {
            self.stations.push(station);
            self.queues.insert(station, Vec::new());
        }
    }

    pub fn stations(&self) -> &[StationId] {
        &self.stations
    }

    pub fn enqueue(&mut self, station: StationId, frame: BusFrame, meta: M) {
        let order = self.next_order;
        self.next_order += 1;
        self.queues
            .get_mut(&station)
            .unwrap_or_else(|| panic!("station {station} not attached"))
            .push(Queued { frame, meta, order });
    }

    pub fn is_idle(&self) -> bool {
        !self.in_flight
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn has_pending(&self) -> bool {
        self.queues.values().any(|q| !q.is_empty())
    }

    pub fn pending(&self) -> usize {
        self.queues.values().map(Vec::len).sum()
    }

    /// Index of the frame a station offers: its lowest priority, oldest first.
    fn head(queue: &[Queued<M>]) -> Option<usize> {
        queue
            .iter()
            .enumerate()
            .min_by_key(|(_, q)| (q.frame.priority(), q.order))
            .map(|(i, _)| i)
    }

    /// Runs arbitration at an idle instant and starts the winner.
    ///
    /// Returns `None` when nothing is queued. A clash removes every frame
    /// that tied at the winning priority; the caller may try again.
    pub fn try_start(&mut self, now: SimTime) -> Option<BusAttempt<M>> {
        assert!(!self.in_flight, "arbitration while the bus is busy");
        let contenders: Vec<(StationId, u16)> = self
            .queues
            .iter()
            .filter_map(|(&s, q)| Self::head(q).map(|i| (s, q[i].frame.priority())))
            .collect();
        match arbitrate(&contenders) {
            Ok(None) => None,
            Ok(Some(winner)) => {
                let queue = self.queues.get_mut(&winner).expect("winner is attached");
                let q = queue.remove(Self::head(queue).expect("winner has a frame"));
                let duration = timing::bus_frame_duration(&q.frame, &self.timing).expect("frames on a bus are valid");
                let end = now + SimTime::from_secs_f64(duration);
                self.in_flight = true;
                self.busy_until = end;
                self.stats.frames += 1;
                self.stats.busy = self.stats.busy + (end - now);
                Some(BusAttempt::Started(Transmission {
                    sender: winner,
                    frame: q.frame,
                    meta: q.meta,
                    start: now,
                    end,
                }))
            }
            Err(clash) => {
                self.stats.clashes += 1;
                let dropped = clash
                    .stations
                    .iter()
                    .map(|&s| {
                        let queue = self.queues.get_mut(&s).expect("clashing station is attached");
                        let q = queue.remove(Self::head(queue).expect("contender has a frame"));
                        (s, q.frame, q.meta)
                    })
                    .collect();
                Some(BusAttempt::Clash { clash, dropped })
            }
        }
    }

    /// Marks the current transmission finished.
    pub fn complete(&mut self) {
        self.in_flight = false;
    }

    /// Every attached station except the sender.
    pub fn receivers(&self, sender: StationId) -> impl Iterator<Item = StationId> + '_ {
        self.stations.iter().copied().filter(move |&s| s != sender)
    }
}

#[derive(Debug)]
struct Direction<M> {
    queue: VecDeque<(EthernetFrame, M)>,
    in_flight: bool,
    busy_until: SimTime,
}

impl<M> Default for Direction<M> {
    fn default() -> Self {
        Direction {
            queue: VecDeque::new(),
            in_flight: false,
            busy_until: SimTime::ZERO,
        }
    }
}

/// Point-to-point full-duplex link; each direction is an independent FIFO.
#[derive(Debug)]
pub struct EthernetLink<M> {
    pub timing: EthernetTimingParams,
    endpoints: [StationId; 2],
    dirs: [Direction<M>; 2],
    pub stats: MediumStats,
}

impl<M> EthernetLink<M> {
    pub fn new(timing: EthernetTimingParams, a: StationId, b: StationId) -> Self {
        EthernetLink {
            timing,
            endpoints: [a, b],
            dirs: [Direction::default(), Direction::default()],
            stats: MediumStats::default(),
        }
    }

    pub fn endpoints(&self) -> [StationId; 2] {
        self.endpoints
    }

    fn dir(&self, from: StationId) -> usize {
        self.endpoints
            .iter()
            .position(|&e| e == from)
            .unwrap_or_else(|| panic!("station {from} is not an endpoint"))
    }

    pub fn peer(&self, of: StationId) -> StationId {
        self.endpoints[1 - self.dir(of)]
    }

    pub fn enqueue(&mut self, from: StationId, frame: EthernetFrame, meta: M) {
        let d = self.dir(from);
        self.dirs[d].queue.push_back((frame, meta));
    }

    pub fn is_idle(&self, from: StationId) -> bool {
        !self.dirs[self.dir(from)].in_flight
    }

    pub fn has_pending(&self, from: StationId) -> bool {
        !self.dirs[self.dir(from)].queue.is_empty()
    }

    pub fn pending(&self) -> usize {
        self.dirs.iter().map(|d| d.queue.len()).sum()
    }

    pub fn try_start(&mut self, from: StationId, now: SimTime) -> Option<Transmission<EthernetFrame, M>> {
        let d = self.dir(from);
        let dir = &mut self.dirs[d];
        assert!(!dir.in_flight, "link direction busy");
        let (frame, meta) = dir.queue.pop_front()?;
        let duration =
            timing::ethernet_duration(frame.payload.len(), &self.timing).expect("frames on a link are valid");
        let end = now + SimTime::from_secs_f64(duration);
        dir.in_flight = true;
        dir.busy_until = end;
        self.stats.frames += 1;
        self.stats.busy = self.stats.busy + (end - now);
        Some(Transmission {
            sender: from,
            frame,
            meta,
            start: now,
            end,
        })
    }

    pub fn complete(&mut self, from: StationId) {
        let d = self.dir(from);
        self.dirs[d].in_flight = false;
    }
}
