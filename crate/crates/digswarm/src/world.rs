//! The excavation site: a single-file tunnel plus unbounded staging areas.
//!
//! Tunnel cells are one body length each and hold at most one robot. Index 0
//! is the dig face and the highest index is the entrance. The home, rest and
//! deposit areas behind the entrance are wide enough that robots never
//! exclude each other there; only tunnel cells are contested.
//!
//! Every `deposits_per_growth` deliveries the face recedes by one cell: a new
//! empty cell is inserted at index 0 and every other occupant's index shifts
//! up by one, which keeps the entrance a fixed reference point. A robot
//! actively digging at the face moves with the face and keeps index 0.

use serde::{Deserialize, Serialize};

pub type RobotId = u32;

/// Where a robot can be. Serializes as the bare cell index or a zone name,
/// e.g. `3` or `"home"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "PosRepr", into = "PosRepr")]
pub enum Position {
    Home,
    Rest,
    Deposit,
    Tunnel(u32),
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum ZoneName {
    Home,
    Rest,
    Deposit,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(untagged)]
enum PosRepr {
    Cell(u32),
    Zone(ZoneName),
}

impl From<PosRepr> for Position {
    fn from(r: PosRepr) -> Self {
        match r {
            PosRepr::Cell(i) => Position::Tunnel(i),
            PosRepr::Zone(ZoneName::Home) => Position::Home,
            PosRepr::Zone(ZoneName::Rest) => Position::Rest,
            PosRepr::Zone(ZoneName::Deposit) => Position::Deposit,
        }
    }
}

impl From<Position> for PosRepr {
    fn from(p: Position) -> Self {
        match p {
            Position::Tunnel(i) => PosRepr::Cell(i),
            Position::Home => PosRepr::Zone(ZoneName::Home),
            Position::Rest => PosRepr::Zone(ZoneName::Rest),
            Position::Deposit => PosRepr::Zone(ZoneName::Deposit),
        }
    }
}

impl Position {
    pub fn is_tunnel(&self) -> bool {
        matches!(self, Position::Tunnel(_))
    }

    /// Home, rest and deposit count as outside the tunnel.
    pub fn is_outside(&self) -> bool {
        !self.is_tunnel()
    }
}

/// Tunnel occupancy and the deposit tally.
#[derive(Debug, Clone)]
pub struct WorldState {
    /// One slot per cell, dig face first. `None` is an empty cell.
    cells: Vec<Option<RobotId>>,
    l0: u32,
    deposit_count: u64,
    deposits_per_growth: u32,
    growth: bool,
}

impl WorldState {
    pub fn new(cfg: &crate::config::WorldConfig) -> Self {
        WorldState {
            cells: vec![None; cfg.l0 as usize],
            l0: cfg.l0,
            deposit_count: 0,
            deposits_per_growth: cfg.deposits_per_growth,
            growth: cfg.growth,
        }
    }

    /// Current tunnel length, cells.
    pub fn len(&self) -> u32 {
        self.cells.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn l0(&self) -> u32 {
        self.l0
    }

    pub fn deposit_count(&self) -> u64 {
        self.deposit_count
    }

    /// Index of the entrance cell (the tunnel is never zero-length).
    pub fn entrance(&self) -> u32 {
        self.len() - 1
    }

    pub fn occupant(&self, cell: u32) -> Option<RobotId> {
        self.cells[cell as usize]
    }

    pub fn is_free(&self, cell: u32) -> bool {
        self.cells[cell as usize].is_none()
    }

    /// Puts `robot` into `cell`. Two robots in one cell is an engine bug.
    pub fn occupy(&mut self, cell: u32, robot: RobotId) {
        let slot = &mut self.cells[cell as usize];
        assert!(
            slot.is_none(),
            "cell {cell} already holds robot {:?} while placing robot {robot}",
            slot
        );
        *slot = Some(robot);
    }

    /// Empties `cell`. Vacating an empty cell is an engine bug.
    pub fn vacate(&mut self, cell: u32) -> RobotId {
        self.cells[cell as usize]
            .take()
            .unwrap_or_else(|| panic!("vacating empty cell {cell}"))
    }

    /// Records one delivered pellet. When the tally crosses a growth batch
    /// (and growth is enabled) the tunnel extends by one cell at the face;
    /// `digger_at_face` names the robot currently excavating at cell 0, if
    /// any, which stays at the face while everyone else shifts up by one.
    ///
    /// Returns `true` when the tunnel grew; the engine must then remap robot
    /// positions to match (`+1` for every tunnel robot except the digger).
    pub fn record_deposit(&mut self, digger_at_face: Option<RobotId>) -> bool {
        self.deposit_count += 1;
        if !self.growth || self.deposit_count % self.deposits_per_growth as u64 != 0 {
            return false;
        }
        if let Some(digger) = digger_at_face {
            assert_eq!(
                self.cells[0],
                Some(digger),
                "declared digger {digger} is not at the face"
            );
        }
        self.cells.insert(0, None);
        if digger_at_face.is_some() {
            self.cells.swap(0, 1);
        }
        true
    }

    /// Length the growth law prescribes for the current tally.
    pub fn expected_len(&self) -> u32 {
        if self.growth {
            self.l0 + (self.deposit_count / self.deposits_per_growth as u64) as u32
        } else {
            self.l0
        }
    }

    /// All currently occupied cells, face first.
    pub fn occupied_cells(&self) -> impl Iterator<Item = (u32, RobotId)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, slot)| slot.map(|r| (i as u32, r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldConfig;

    fn world(l0: u32, per_growth: u32, growth: bool) -> WorldState {
        WorldState::new(&WorldConfig {
            l0,
            deposits_per_growth: per_growth,
            growth,
        })
    }

    #[test]
    fn growth_follows_the_batch_rule() {
        // l0 = 2, one growth per 5 deposits: lengths 2,2,2,2,3 after 1..=5.
        let mut w = world(2, 5, true);
        let mut lengths = Vec::new();
        for _ in 0..10 {
            w.record_deposit(None);
            lengths.push(w.len());
        }
        assert_eq!(lengths, [2, 2, 2, 2, 3, 3, 3, 3, 3, 4]);
        assert_eq!(w.expected_len(), w.len());
    }

    #[test]
    fn growth_disabled_keeps_length_fixed() {
        let mut w = world(3, 2, false);
        for _ in 0..10 {
            assert!(!w.record_deposit(None));
        }
        assert_eq!(w.len(), 3);
        assert_eq!(w.deposit_count(), 10);
    }

    #[test]
    fn growth_shifts_occupants_and_keeps_the_new_cell_empty() {
        let mut w = world(3, 1, true);
        w.occupy(1, 7);
        w.occupy(2, 8);
        assert!(w.record_deposit(None));
        assert_eq!(w.len(), 4);
        assert_eq!(w.occupant(0), None);
        assert_eq!(w.occupant(1), None);
        assert_eq!(w.occupant(2), Some(7));
        assert_eq!(w.occupant(3), Some(8));
    }

    #[test]
    fn digger_at_face_rides_the_growing_face() {
        let mut w = world(2, 1, true);
        w.occupy(0, 3);
        w.occupy(1, 4);
        assert!(w.record_deposit(Some(3)));
        assert_eq!(w.len(), 3);
        assert_eq!(w.occupant(0), Some(3), "digger stays at the face");
        assert_eq!(w.occupant(1), None, "the digger's old cell is the new gap");
        assert_eq!(w.occupant(2), Some(4));
    }

    #[test]
    fn entrance_tracks_length() {
        let mut w = world(1, 1, true);
        assert_eq!(w.entrance(), 0);
        w.record_deposit(None);
        assert_eq!(w.entrance(), 1);
    }

    #[test]
    #[should_panic(expected = "already holds")]
    fn double_occupancy_is_a_bug() {
        let mut w = world(2, 10, true);
        w.occupy(1, 1);
        w.occupy(1, 2);
    }

    #[test]
    #[should_panic(expected = "vacating empty cell")]
    fn vacating_empty_cell_is_a_bug() {
        let mut w = world(2, 10, true);
        w.vacate(0);
    }

    #[test]
    fn position_serializes_as_cell_index_or_zone_name() {
        let cases = [
            (Position::Tunnel(3), "3"),
            (Position::Home, "\"home\""),
            (Position::Rest, "\"rest\""),
            (Position::Deposit, "\"deposit\""),
        ];
        for (pos, json) in cases {
            assert_eq!(serde_json::to_string(&pos).unwrap(), json);
            assert_eq!(serde_json::from_str::<Position>(json).unwrap(), pos);
        }
    }
}
