//! Cooperative box pushing on a square grid.
//!
//! Two agents share a grid with two small boxes and one large box spanning
//! two cells. Delivering a small box to the top row pays +10; pushing the
//! large box there — which requires both agents pushing its two cells
//! simultaneously — pays +100. Pushing the large box alone or walking into
//! a boundary costs -10. An episode ends when any box reaches the top row
//! or after 100 primitive timesteps.
//!
//! Each agent observes only the cell directly in front of it, as a one-hot
//! over {empty, teammate, boundary, small box, large box}.
//!
//! Besides the four primitive one-step macro-actions, scripted navigation
//! macro-actions move an agent to the waypoint beneath a box (facing up),
//! and `Push` walks forward until the agent hits a boundary or makes
//! contact with the large box.
//!
//! Start layout (per grid size G): boxes sit on row G/2 - 1 with the large
//! box centered and the small boxes flanking it; agents start in the bottom
//! corners facing up. The top row is the goal area.

use super::{ActiveMacro, EnvError, MacroEnv, StepOutcome};

pub const HORIZON: usize = 100;
pub const OBS_DIM: usize = 5;
pub const NUM_AGENTS: usize = 2;

pub const A_STAY: usize = 0;
pub const A_FORWARD: usize = 1;
pub const A_TURN_LEFT: usize = 2;
pub const A_TURN_RIGHT: usize = 3;
pub const A_GO_SMALL_0: usize = 4;
pub const A_GO_SMALL_1: usize = 5;
pub const A_GO_BIG: usize = 6;
pub const A_PUSH: usize = 7;
pub const ACTION_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Up,
    Right,
    Down,
    Left,
}

impl Dir {
    fn delta(self) -> (isize, isize) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Right => (0, 1),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
        }
    }

    fn left(self) -> Dir {
        match self {
            Dir::Up => Dir::Left,
            Dir::Left => Dir::Down,
            Dir::Down => Dir::Right,
            Dir::Right => Dir::Up,
        }
    }

    fn right(self) -> Dir {
        self.left().left().left()
    }

    fn index(self) -> usize {
        match self {
            Dir::Up => 0,
            Dir::Right => 1,
            Dir::Down => 2,
            Dir::Left => 3,
        }
    }

    fn glyph(self) -> char {
        match self {
            Dir::Up => '^',
            Dir::Right => '>',
            Dir::Down => 'v',
            Dir::Left => '<',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Primitive {
    Stay,
    Forward,
    TurnLeft,
    TurnRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pose {
    row: isize,
    col: isize,
    dir: Dir,
}

#[derive(Debug, Clone, Copy, Default)]
struct StepEvents {
    hit_boundary: bool,
    touched_big: bool,
}

#[derive(Debug, Clone)]
pub struct BoxPushing {
    grid: usize,
    agents: [Pose; NUM_AGENTS],
    small_boxes: [(isize, isize); 2],
    /// Left cell of the two-cell large box; it also occupies (row, col+1).
    big_box: (isize, isize),
    t: usize,
    done: bool,
    delivered: bool,
    last_events: [StepEvents; NUM_AGENTS],
}

impl BoxPushing {
    pub fn new(grid: usize) -> Result<Self, EnvError> {
        if ![6, 8, 10, 12, 14].contains(&grid) {
            return Err(EnvError::UnknownGrid(grid));
        }
        let mut env = BoxPushing {
            grid,
            agents: [
                Pose { row: 0, col: 0, dir: Dir::Up },
                Pose { row: 0, col: 0, dir: Dir::Up },
            ],
            small_boxes: [(0, 0); 2],
            big_box: (0, 0),
            t: 0,
            done: false,
            delivered: false,
            last_events: [StepEvents::default(); NUM_AGENTS],
        };
        env.reset(0);
        Ok(env)
    }

    fn boxes_row(&self) -> isize {
        (self.grid / 2 - 1) as isize
    }

    fn big_cells(&self) -> [(isize, isize); 2] {
        [self.big_box, (self.big_box.0, self.big_box.1 + 1)]
    }

    fn in_grid(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.grid && (c as usize) < self.grid
    }

    fn small_box_at(&self, cell: (isize, isize)) -> Option<usize> {
        self.small_boxes.iter().position(|b| *b == cell)
    }

    fn is_big_box(&self, cell: (isize, isize)) -> bool {
        self.big_cells().contains(&cell)
    }

    fn is_box(&self, cell: (isize, isize)) -> bool {
        self.small_box_at(cell).is_some() || self.is_big_box(cell)
    }

    /// Waypoint beneath small box i.
    fn small_waypoint(&self, i: usize) -> (isize, isize) {
        (self.small_boxes[i].0 + 1, self.small_boxes[i].1)
    }

    /// Waypoint beneath the large-box cell assigned to `agent` (agent 0
    /// takes the left cell, agent 1 the right).
    fn big_waypoint(&self, agent: usize) -> (isize, isize) {
        let cells = self.big_cells();
        (cells[agent].0 + 1, cells[agent].1)
    }

    fn front_cell(&self, agent: usize) -> (isize, isize) {
        let p = self.agents[agent];
        let (dr, dc) = p.dir.delta();
        (p.row + dr, p.col + dc)
    }

    fn goto_waypoint(&self, id: usize, agent: usize) -> Option<(isize, isize)> {
        match id {
            A_GO_SMALL_0 => Some(self.small_waypoint(0)),
            A_GO_SMALL_1 => Some(self.small_waypoint(1)),
            A_GO_BIG => Some(self.big_waypoint(agent)),
            _ => None,
        }
    }

    /// One navigation decision toward `target`: align on the column first,
    /// then the row, stepping around boxes and the teammate.
    fn navigate(&self, agent: usize, target: (isize, isize)) -> Primitive {
        let p = self.agents[agent];
        let teammate = self.agents[1 - agent];
        if (p.row, p.col) == target {
            return self.turn_toward(agent, Dir::Up);
        }
        let blocked = |cell: (isize, isize)| {
            !self.in_grid(cell.0, cell.1)
                || self.is_box(cell)
                || (teammate.row, teammate.col) == cell
        };
        let mut candidates = Vec::new();
        if p.col != target.1 {
            candidates.push(if target.1 > p.col { Dir::Right } else { Dir::Left });
        }
        if p.row != target.0 {
            candidates.push(if target.0 > p.row { Dir::Down } else { Dir::Up });
        }
        for dir in candidates {
            let (dr, dc) = dir.delta();
            if !blocked((p.row + dr, p.col + dc)) {
                return if p.dir == dir {
                    Primitive::Forward
                } else {
                    self.turn_toward(agent, dir)
                };
            }
        }
        Primitive::Stay
    }

    fn turn_toward(&self, agent: usize, want: Dir) -> Primitive {
        let cur = self.agents[agent].dir;
        if cur == want {
            Primitive::Stay
        } else if cur.left() == want {
            Primitive::TurnLeft
        } else {
            Primitive::TurnRight
        }
    }

    /// Scripted low-level controller: macro-action id -> one primitive.
    fn controller(&self, agent: usize, m: ActiveMacro) -> Primitive {
        match m.id {
            A_STAY => Primitive::Stay,
            A_FORWARD => Primitive::Forward,
            A_TURN_LEFT => Primitive::TurnLeft,
            A_TURN_RIGHT => Primitive::TurnRight,
            A_PUSH => Primitive::Forward,
            _ => {
                let target = self.goto_waypoint(m.id, agent).expect("navigation macro");
                self.navigate(agent, target)
            }
        }
    }

    fn macro_terminated(&self, agent: usize, m: ActiveMacro) -> bool {
        match m.id {
            A_STAY | A_FORWARD | A_TURN_LEFT | A_TURN_RIGHT => true,
            A_PUSH => {
                let ev = self.last_events[agent];
                ev.hit_boundary || ev.touched_big
            }
            _ => {
                let target = self.goto_waypoint(m.id, agent).expect("navigation macro");
                let p = self.agents[agent];
                (p.row, p.col) == target && p.dir == Dir::Up
            }
        }
    }
}

impl MacroEnv for BoxPushing {
    fn id(&self) -> String {
        format!("boxpushing{}", self.grid)
    }

    fn num_agents(&self) -> usize {
        NUM_AGENTS
    }

    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn action_name(&self, id: usize) -> String {
        match id {
            A_STAY => "Stay".into(),
            A_FORWARD => "Forward".into(),
            A_TURN_LEFT => "Turn-Left".into(),
            A_TURN_RIGHT => "Turn-Right".into(),
            A_GO_SMALL_0 => "Go-to-Small-Box(0)".into(),
            A_GO_SMALL_1 => "Go-to-Small-Box(1)".into(),
            A_GO_BIG => "Go-to-Big-Box".into(),
            A_PUSH => "Push".into(),
            other => format!("unknown({other})"),
        }
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn state_dim(&self) -> usize {
        NUM_AGENTS * 6 + 2 * 2 + 2
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn reset(&mut self, _seed: u64) {
        let g = self.grid as isize;
        let bm = self.boxes_row();
        self.agents = [
            Pose { row: g - 1, col: 0, dir: Dir::Up },
            Pose { row: g - 1, col: g - 1, dir: Dir::Up },
        ];
        self.big_box = (bm, g / 2 - 1);
        self.small_boxes = [(bm, 1), (bm, g - 2)];
        self.t = 0;
        self.done = false;
        self.delivered = false;
        self.last_events = [StepEvents::default(); NUM_AGENTS];
    }

    fn state_features(&self) -> Vec<f64> {
        let norm = (self.grid - 1) as f64;
        let mut out = Vec::with_capacity(self.state_dim());
        for a in &self.agents {
            out.push(a.row as f64 / norm);
            out.push(a.col as f64 / norm);
            let mut one = [0.0; 4];
            one[a.dir.index()] = 1.0;
            out.extend_from_slice(&one);
        }
        for b in &self.small_boxes {
            out.push(b.0 as f64 / norm);
            out.push(b.1 as f64 / norm);
        }
        out.push(self.big_box.0 as f64 / norm);
        out.push(self.big_box.1 as f64 / norm);
        out
    }

    fn macro_observation(&self, agent: usize) -> Vec<f64> {
        let cell = self.front_cell(agent);
        let teammate = self.agents[1 - agent];
        let mut obs = vec![0.0; OBS_DIM];
        let idx = if !self.in_grid(cell.0, cell.1) {
            2 // boundary
        } else if (teammate.row, teammate.col) == cell {
            1 // teammate
        } else if self.small_box_at(cell).is_some() {
            3 // small box
        } else if self.is_big_box(cell) {
            4 // large box
        } else {
            0 // empty
        };
        obs[idx] = 1.0;
        obs
    }

    fn available_actions(&self, _agent: usize) -> Vec<usize> {
        (0..ACTION_COUNT).collect()
    }

    fn advance(&mut self, active: &[ActiveMacro]) -> StepOutcome {
        assert!(!self.done, "advance called on a finished episode");
        assert_eq!(active.len(), NUM_AGENTS);
        let mut reward = 0.0;
        let mut events = [StepEvents::default(); NUM_AGENTS];
        let prims: Vec<Primitive> = (0..NUM_AGENTS)
            .map(|i| self.controller(i, active[i]))
            .collect();

        // Turns and stays first; they never conflict.
        for (i, prim) in prims.iter().enumerate() {
            match prim {
                Primitive::TurnLeft => self.agents[i].dir = self.agents[i].dir.left(),
                Primitive::TurnRight => self.agents[i].dir = self.agents[i].dir.right(),
                _ => {}
            }
        }

        let movers: Vec<usize> = (0..NUM_AGENTS)
            .filter(|i| prims[*i] == Primitive::Forward)
            .collect();

        // Coordinated push: both agents forward into the two large-box
        // cells, each directly beneath its cell and facing up.
        let big = self.big_cells();
        let coordinated = movers.len() == 2 && {
            let f0 = self.front_cell(0);
            let f1 = self.front_cell(1);
            self.agents[0].dir == Dir::Up
                && self.agents[1].dir == Dir::Up
                && ((f0 == big[0] && f1 == big[1]) || (f0 == big[1] && f1 == big[0]))
        };
        if coordinated {
            self.big_box.0 -= 1;
            for a in self.agents.iter_mut() {
                a.row -= 1;
            }
            events[0].touched_big = true;
            events[1].touched_big = true;
            if self.big_box.0 == 0 {
                reward += 100.0;
                self.delivered = true;
            }
        } else {
            // Resolve the remaining movers one kind at a time. Targets are
            // classified against the pre-move world so the outcome does not
            // depend on agent order, and two agents never enter one cell.
            let fronts: Vec<(isize, isize)> = (0..NUM_AGENTS).map(|i| self.front_cell(i)).collect();
            let mut moved_to: Vec<Option<(isize, isize)>> = vec![None; NUM_AGENTS];
            for &i in &movers {
                let cell = fronts[i];
                let teammate = 1 - i;
                if !self.in_grid(cell.0, cell.1) {
                    reward -= 10.0;
                    events[i].hit_boundary = true;
                    continue;
                }
                if self.is_big_box(cell) {
                    // lone push attempt on the large box
                    reward -= 10.0;
                    events[i].touched_big = true;
                    continue;
                }
                if let Some(b) = self.small_box_at(cell) {
                    let (dr, dc) = self.agents[i].dir.delta();
                    let btarget = (cell.0 + dr, cell.1 + dc);
                    if !self.in_grid(btarget.0, btarget.1) {
                        reward -= 10.0;
                        events[i].hit_boundary = true;
                        continue;
                    }
                    let teammate_pose = self.agents[teammate];
                    if self.is_box(btarget) || (teammate_pose.row, teammate_pose.col) == btarget {
                        continue; // blocked push, no penalty
                    }
                    self.small_boxes[b] = btarget;
                    moved_to[i] = Some(cell);
                    if btarget.0 == 0 {
                        reward += 10.0;
                        self.delivered = true;
                    }
                    continue;
                }
                // plain move into an empty cell; blocked by the teammate's
                // current cell or by the teammate moving into the same cell
                let teammate_pose = self.agents[teammate];
                let conflict = (teammate_pose.row, teammate_pose.col) == cell
                    || (prims[teammate] == Primitive::Forward && fronts[teammate] == cell);
                if !conflict {
                    moved_to[i] = Some(cell);
                }
            }
            for (i, m) in moved_to.iter().enumerate() {
                if let Some((r, c)) = m {
                    self.agents[i].row = *r;
                    self.agents[i].col = *c;
                }
            }
        }

        self.last_events = events;
        self.t += 1;
        self.done = self.delivered || self.t >= HORIZON;
        let terminated = (0..NUM_AGENTS)
            .map(|i| self.macro_terminated(i, active[i]))
            .collect();
        StepOutcome {
            reward,
            terminated,
            done: self.done,
        }
    }

    fn render(&self) -> String {
        let g = self.grid;
        let mut rows = vec![vec!['.'; g]; g];
        for b in &self.small_boxes {
            rows[b.0 as usize][b.1 as usize] = 's';
        }
        for c in self.big_cells() {
            rows[c.0 as usize][c.1 as usize] = 'B';
        }
        for a in &self.agents {
            rows[a.row as usize][a.col as usize] = a.dir.glyph();
        }
        rows.into_iter()
            .map(|r| r.into_iter().collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }
}
