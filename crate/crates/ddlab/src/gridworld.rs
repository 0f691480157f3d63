//! FrozenLake gridworld: a rectangular ice sheet with a start cell, absorbing
//! holes, and a single rewarding goal.
//!
//! Transitions are exposed both as a pure function over an explicit rng
//! stream ([`step`]) and as a small stateful wrapper ([`Env`]) that enforces
//! the episode horizon. In slippery mode the intended direction and its two
//! perpendicular neighbours are realized with probability 1/3 each; moves off
//! the grid leave the position unchanged.

use rand::Rng;

use crate::error::{Error, Result};

/// One cell of the lake.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

/// The four moves, in the conventional Left/Down/Right/Up = 0/1/2/3 order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Left = 0,
    Down = 1,
    Right = 2,
    Up = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Left, Action::Down, Action::Right, Action::Up];

    /// Number of actions; the policy head and entropy bound both derive from it.
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Action> {
        Action::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::usage(format!("action index {index} out of range 0..4")))
    }

    /// (row delta, col delta) of the move.
    fn delta(self) -> (isize, isize) {
        match self {
            Action::Left => (0, -1),
            Action::Down => (1, 0),
            Action::Right => (0, 1),
            Action::Up => (-1, 0),
        }
    }

    /// The two directions perpendicular to `self`, in a fixed order
    /// (counter-clockwise neighbour first). Slippery steps realize
    /// `[ccw, intended, cw]` with probability 1/3 each.
    fn perpendicular(self) -> [Action; 2] {
        let i = self.index();
        [Action::ALL[(i + 3) % 4], Action::ALL[(i + 1) % 4]]
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Left => "left",
            Action::Down => "down",
            Action::Right => "right",
            Action::Up => "up",
        }
    }
}

/// Rectangular map with exactly one start and one goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Cell>,
    pub start_index: usize,
    pub goal_index: usize,
}

/// The community-standard 4x4 layout; holes at flat indices {5, 7, 11, 12},
/// goal at 15.
pub const DEFAULT_MAP_ROWS: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

// Maps travel through config files as arrays of row strings.
impl serde::Serialize for GridMap {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for GridMap {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<String>::deserialize(deserializer)?;
        GridMap::parse(&rows).map_err(serde::de::Error::custom)
    }
}

impl GridMap {
    /// Parses a map from row strings over the alphabet {S, F, H, G}.
    pub fn parse(rows: &[impl AsRef<str>]) -> Result<GridMap> {
        if rows.is_empty() {
            return Err(Error::usage("map has no rows"));
        }
        let cols = rows[0].as_ref().chars().count();
        if cols == 0 {
            return Err(Error::usage("map rows are empty"));
        }
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != cols {
                return Err(Error::usage(format!(
                    "map row {r} has {} cells, expected {cols}",
                    row.chars().count()
                )));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    'S' => Cell::Start,
                    'F' => Cell::Frozen,
                    'H' => Cell::Hole,
                    'G' => Cell::Goal,
                    other => {
                        return Err(Error::usage(format!(
                            "map row {r} contains '{other}', expected one of S F H G"
                        )))
                    }
                });
            }
        }
        let starts: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Start)
            .map(|(i, _)| i)
            .collect();
        let goals: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Goal)
            .map(|(i, _)| i)
            .collect();
        if starts.len() != 1 {
            return Err(Error::usage(format!(
                "map must contain exactly one S, found {}",
                starts.len()
            )));
        }
        if goals.len() != 1 {
            return Err(Error::usage(format!(
                "map must contain exactly one G, found {}",
                goals.len()
            )));
        }
        Ok(GridMap {
            rows: rows.len(),
            cols,
            cells,
            start_index: starts[0],
            goal_index: goals[0],
        })
    }

    pub fn default_4x4() -> GridMap {
        GridMap::parse(&DEFAULT_MAP_ROWS).expect("default map is valid")
    }

    pub fn n_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell(&self, state: usize) -> Cell {
        self.cells[state]
    }

    /// Holes and the goal absorb the agent.
    pub fn is_terminal(&self, state: usize) -> bool {
        matches!(self.cells[state], Cell::Hole | Cell::Goal)
    }

    /// Applies `action` from `state` with boundary clamping; moving off the
    /// grid leaves the state unchanged.
    pub fn move_from(&self, state: usize, action: Action) -> usize {
        let (dr, dc) = action.delta();
        let row = (state / self.cols) as isize + dr;
        let col = (state % self.cols) as isize + dc;
        if row < 0 || row >= self.rows as isize || col < 0 || col >= self.cols as isize {
            state
        } else {
            row as usize * self.cols + col as usize
        }
    }

    /// Serializes back to row strings (inverse of `parse`).
    pub fn to_rows(&self) -> Vec<String> {
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| match self.cells[r * self.cols + c] {
                        Cell::Start => 'S',
                        Cell::Frozen => 'F',
                        Cell::Hole => 'H',
                        Cell::Goal => 'G',
                    })
                    .collect()
            })
            .collect()
    }
}

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: Action,
    pub reward: f64,
    pub next_state: usize,
    /// True iff `next_state` is a hole or the goal. Horizon truncation is
    /// flagged separately by [`Env::step`].
    pub terminal: bool,
}

/// Environment configuration for one run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnvConfig {
    pub slippery: bool,
    /// Episode horizon; reaching it truncates the episode without marking
    /// the state terminal, so value targets still bootstrap.
    pub max_steps: usize,
    pub map: GridMap,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            slippery: true,
            max_steps: 100,
            map: GridMap::default_4x4(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::usage("max_steps must be >= 1"));
        }
        Ok(())
    }
}

/// Returns the start state. Pure: calling it twice gives the same value.
pub fn reset(config: &EnvConfig) -> usize {
    config.map.start_index
}

/// Applies one action from `state`, drawing the slip direction from `rng`
/// when the config is slippery.
///
/// Errors if `state` is a hole or the goal.
pub fn step<R: Rng + ?Sized>(
    state: usize,
    action: Action,
    rng: &mut R,
    config: &EnvConfig,
) -> Result<Transition> {
    let map = &config.map;
    if state >= map.n_states() {
        return Err(Error::usage(format!(
            "state {state} out of range 0..{}",
            map.n_states()
        )));
    }
    if map.is_terminal(state) {
        return Err(Error::usage(format!(
            "cannot step from terminal state {state}"
        )));
    }
    let realized = if config.slippery {
        let [ccw, cw] = action.perpendicular();
        match rng.gen_range(0..3u8) {
            0 => ccw,
            1 => action,
            _ => cw,
        }
    } else {
        action
    };
    let next_state = map.move_from(state, realized);
    let reward = if next_state == map.goal_index {
        1.0
    } else {
        0.0
    };
    Ok(Transition {
        state,
        action,
        reward,
        next_state,
        terminal: map.is_terminal(next_state),
    })
}

/// One-hot encoding of a state, length `rows * cols`.
pub fn encode_state(state: usize, map: &GridMap) -> Result<Vec<f64>> {
    if state >= map.n_states() {
        return Err(Error::usage(format!(
            "state {state} out of range 0..{}",
            map.n_states()
        )));
    }
    let mut v = vec![0.0; map.n_states()];
    v[state] = 1.0;
    Ok(v)
}

/// Result of a stateful step: the transition plus the horizon flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub transition: Transition,
    /// True iff this step exhausted the horizon without reaching a terminal
    /// cell. Truncated episodes bootstrap from the final state's value.
    pub truncated: bool,
}

/// Stateful wrapper tracking the current cell and the step counter.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    state: usize,
    steps: usize,
    done: bool,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Env> {
        config.validate()?;
        let state = reset(&config);
        Ok(Env {
            config,
            state,
            steps: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// True once a terminal cell was entered or the horizon was exhausted.
    pub fn done(&self) -> bool {
        self.done
    }

    /// Moves back to the start cell and zeroes the step counter.
    pub fn reset(&mut self) -> usize {
        self.state = reset(&self.config);
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: Action, rng: &mut R) -> Result<StepResult> {
        if self.done {
            return Err(Error::usage("episode is over; call reset first"));
        }
        let transition = step(self.state, action, rng, &self.config)?;
        self.steps += 1;
        self.state = transition.next_state;
        let truncated = !transition.terminal && self.steps >= self.config.max_steps;
        self.done = transition.terminal || truncated;
        Ok(StepResult {
            transition,
            truncated,
        })
    }
}
