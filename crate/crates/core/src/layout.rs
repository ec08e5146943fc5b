//! Warehouse geometry and routing.
//!
//! The floor is a grid of square cells. AMRs drive over aisle, dock and
//! station cells (4-connected, uniform cost); storage cells are only ever
//! entered as the final cell of a route, at the aisle-facing end of a lane.
//! Distances between all points of interest (docks, stations, lane fronts)
//! are computed once at construction and served from a dense table.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Coord = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Storage,
    Aisle,
    InputDock,
    OutputDock,
    Station,
}

impl Cell {
    fn from_char(c: char) -> Option<Cell> {
        Some(match c {
            'S' => Cell::Storage,
            '.' => Cell::Aisle,
            'I' => Cell::InputDock,
            'O' => Cell::OutputDock,
            'C' => Cell::Station,
            _ => return None,
        })
    }

    fn to_char(self) -> char {
        match self {
            Cell::Storage => 'S',
            Cell::Aisle => '.',
            Cell::InputDock => 'I',
            Cell::OutputDock => 'O',
            Cell::Station => 'C',
        }
    }

    pub fn is_traversable(self) -> bool {
        self != Cell::Storage
    }
}

/// A location an AMR can be at between tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    Dock(usize),
    Station(usize),
    Lane(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DockKind {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dock {
    pub id: usize,
    pub kind: DockKind,
    pub cell: Coord,
}

/// A block-stacking lane: storage slots accessed LIFO from the aisle end.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: usize,
    /// Slots ordered from the aisle end inwards.
    pub cells: Vec<Coord>,
    pub capacity: usize,
}

impl Lane {
    pub fn front(&self) -> Coord {
        self.cells[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteResult {
    pub distance: f64,
    pub travel_time: f64,
    pub path: Vec<Coord>,
}

/// Parameters of the generated rectangular layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSpec {
    pub width_m: f64,
    pub depth_m: f64,
    pub cell_size_m: f64,
    pub speed_mps: f64,
    pub input_docks: usize,
    pub output_docks: usize,
    pub stations: usize,
    /// Slots per lane.
    pub lane_depth: usize,
    /// Pallets stacked per slot.
    pub tiers: usize,
    /// A north-south cross aisle every this many columns.
    pub cross_aisle_every: usize,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self::wepa()
    }
}

impl LayoutSpec {
    /// 150 x 80 m hall, 4 input docks (west), 10 output docks (south),
    /// 3 charging stations spread evenly along the north wall.
    pub fn wepa() -> Self {
        Self {
            width_m: 150.0,
            depth_m: 80.0,
            cell_size_m: 1.25,
            speed_mps: 1.5,
            input_docks: 4,
            output_docks: 10,
            stations: 3,
            lane_depth: 5,
            tiers: 2,
            cross_aisle_every: 40,
        }
    }

    /// 10 x 10 m toy grid used by small hand-checkable tests.
    pub fn toy() -> Self {
        Self {
            width_m: 10.0,
            depth_m: 10.0,
            cell_size_m: 1.0,
            speed_mps: 1.5,
            input_docks: 1,
            output_docks: 1,
            stations: 1,
            lane_depth: 3,
            tiers: 1,
            cross_aisle_every: 0,
        }
    }

    /// Renders the layout as the plain-text grid format.
    pub fn to_grid_text(&self) -> Result<String> {
        let w = (self.width_m / self.cell_size_m).round() as usize;
        let h = (self.depth_m / self.cell_size_m).round() as usize;
        if w < 3 || h < 3 {
            return Err(Error::Layout("layout must be at least 3x3 cells".into()));
        }
        if self.stations == 0 || self.input_docks == 0 || self.output_docks == 0 {
            return Err(Error::Layout(
                "need at least one station and one dock of each kind".into(),
            ));
        }
        if self.stations > w - 2 || self.output_docks > w - 2 || self.input_docks > h - 2 {
            return Err(Error::Layout(
                "too many docks or stations for the wall length".into(),
            ));
        }
        let depth = self.lane_depth.max(1);
        let mut grid = vec![vec![Cell::Aisle; w]; h];

        let storage_col = |c: usize| {
            c > 0
                && c + 1 < w
                && !(self.cross_aisle_every > 0 && c.is_multiple_of(self.cross_aisle_every))
        };
        let fill_rows = |from: usize, to: usize, grid: &mut Vec<Vec<Cell>>| {
            for row in grid.iter_mut().take(to).skip(from) {
                for (c, cell) in row.iter_mut().enumerate() {
                    if storage_col(c) {
                        *cell = Cell::Storage;
                    }
                }
            }
        };
        // Bands of lanes: `depth` rows opening north, `depth` rows opening
        // south, then one aisle row. The south wall row stays an aisle.
        let mut r = 1;
        while r + depth < h {
            fill_rows(r, r + depth, &mut grid);
            r += depth;
            if r + depth < h - 1 {
                fill_rows(r, r + depth, &mut grid);
                r += depth;
            }
            r += 1;
        }

        for i in 0..self.stations {
            let c = (w * (i + 1)) / (self.stations + 1);
            grid[0][c.clamp(1, w - 2)] = Cell::Station;
        }
        for i in 0..self.input_docks {
            let r = (h * (i + 1)) / (self.input_docks + 1);
            grid[r.clamp(1, h - 2)][0] = Cell::InputDock;
        }
        for i in 0..self.output_docks {
            let c = (w * (i + 1)) / (self.output_docks + 1);
            grid[h - 1][c.clamp(1, w - 2)] = Cell::OutputDock;
        }
        // Keep the cell in front of every wall fixture free, so no storage
        // cell is boxed in between a fixture and other storage.
        for r in 0..h {
            for c in 0..w {
                let front = match grid[r][c] {
                    Cell::Station => Some((1, c)),
                    Cell::InputDock => Some((r, 1)),
                    Cell::OutputDock => Some((h - 2, c)),
                    _ => None,
                };
                if let Some((fr, fc)) = front {
                    if grid[fr][fc] == Cell::Storage {
                        grid[fr][fc] = Cell::Aisle;
                    }
                }
            }
        }

        let mut out = String::new();
        writeln!(out, "cell_size = {}", self.cell_size_m).unwrap();
        writeln!(out, "speed = {}", self.speed_mps).unwrap();
        writeln!(out, "tiers = {}", self.tiers.max(1)).unwrap();
        writeln!(out, "lane_depth = {}", depth).unwrap();
        for row in grid {
            out.extend(row.into_iter().map(Cell::to_char));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<Layout> {
        Layout::from_grid_text(&self.to_grid_text()?)
    }
}

#[derive(Debug, Clone)]
pub struct Layout {
    width: usize,
    height: usize,
    pub cell_size: f64,
    pub speed: f64,
    cells: Vec<Cell>,
    pub lanes: Vec<Lane>,
    pub docks: Vec<Dock>,
    pub stations: Vec<Coord>,
    places: Vec<Place>,
    /// Shortest-path step counts between every pair of places.
    steps: Vec<u32>,
    diameter_m: f64,
}

impl Layout {
    pub fn load(path: &Path) -> Result<Layout> {
        Layout::from_grid_text(&std::fs::read_to_string(path)?)
    }

    /// Parses the plain-text layout format: `key = value` header lines
    /// (`cell_size`, `speed`, `tiers`, `lane_depth`), `#` comments, then one
    /// grid row per line using `S . I O C`.
    pub fn from_grid_text(text: &str) -> Result<Layout> {
        let mut cell_size = 1.0;
        let mut speed = 1.5;
        let mut tiers = 1usize;
        let mut lane_depth = usize::MAX;
        let mut rows: Vec<Vec<Cell>> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let (k, v) = (k.trim(), v.trim());
                let bad = || Error::Layout(format!("line {}: bad value for {k}", n + 1));
                match k {
                    "cell_size" => cell_size = v.parse().map_err(|_| bad())?,
                    "speed" => speed = v.parse().map_err(|_| bad())?,
                    "tiers" => tiers = v.parse().map_err(|_| bad())?,
                    "lane_depth" => lane_depth = v.parse().map_err(|_| bad())?,
                    _ => return Err(Error::Layout(format!("line {}: unknown key {k}", n + 1))),
                }
                continue;
            }
            let row = line
                .chars()
                .map(|c| {
                    Cell::from_char(c)
                        .ok_or_else(|| Error::Layout(format!("line {}: bad cell {c:?}", n + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if !(cell_size > 0.0 && speed > 0.0) || tiers == 0 || lane_depth == 0 {
            return Err(Error::Layout(
                "cell_size, speed, tiers and lane_depth must be positive".into(),
            ));
        }
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if height == 0 || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Layout(
                "grid rows must be non-empty and equally long".into(),
            ));
        }
        let cells: Vec<Cell> = rows.into_iter().flatten().collect();
        Layout::from_cells(width, height, cells, cell_size, speed, tiers, lane_depth)
    }

    fn from_cells(
        width: usize,
        height: usize,
        cells: Vec<Cell>,
        cell_size: f64,
        speed: f64,
        tiers: usize,
        lane_depth: usize,
    ) -> Result<Layout> {
        let at = |r: usize, c: usize| cells[r * width + c];
        let mut docks = Vec::new();
        let mut stations = Vec::new();
        // Input docks first so dock ids group by kind.
        for kind in [Cell::InputDock, Cell::OutputDock] {
            for r in 0..height {
                for c in 0..width {
                    if at(r, c) == kind {
                        docks.push(Dock {
                            id: docks.len(),
                            kind: if kind == Cell::InputDock {
                                DockKind::Input
                            } else {
                                DockKind::Output
                            },
                            cell: (r, c),
                        });
                    }
                }
            }
        }
        for r in 0..height {
            for c in 0..width {
                if at(r, c) == Cell::Station {
                    stations.push((r, c));
                }
            }
        }

        // Lanes grow from a storage cell that touches an aisle, away from it.
        // North-south lanes are formed first; east-west ones only pick up
        // what is left, so wall-side cells do not cut across lane bands.
        let mut assigned = vec![false; cells.len()];
        let mut lanes = Vec::new();
        let passes: [&[(isize, isize)]; 2] = [&[(-1, 0), (1, 0)], &[(0, -1), (0, 1)]];
        for dirs in passes {
            for r in 0..height {
                for c in 0..width {
                    if at(r, c) != Cell::Storage || assigned[r * width + c] {
                        continue;
                    }
                    let Some(&(dr, dc)) = dirs.iter().find(|(dr, dc)| {
                        step((r, c), *dr, *dc, width, height)
                            .is_some_and(|(nr, nc)| at(nr, nc) == Cell::Aisle)
                    }) else {
                        continue;
                    };
                    let mut lane_cells = vec![(r, c)];
                    assigned[r * width + c] = true;
                    let mut cur = (r, c);
                    while lane_cells.len() < lane_depth {
                        match step(cur, -dr, -dc, width, height) {
                            Some((nr, nc))
                                if at(nr, nc) == Cell::Storage && !assigned[nr * width + nc] =>
                            {
                                assigned[nr * width + nc] = true;
                                lane_cells.push((nr, nc));
                                cur = (nr, nc);
                            }
                            _ => break,
                        }
                    }
                    lanes.push(Lane {
                        id: lanes.len(),
                        capacity: lane_cells.len() * tiers,
                        cells: lane_cells,
                    });
                }
            }
        }
        if let Some(i) = (0..cells.len()).find(|&i| cells[i] == Cell::Storage && !assigned[i]) {
            return Err(Error::Layout(format!(
                "storage cell {:?} is not part of any aisle-accessible lane",
                (i / width, i % width)
            )));
        }
        if stations.is_empty() {
            return Err(Error::Layout("layout has no charging station".into()));
        }

        let mut layout = Layout {
            width,
            height,
            cell_size,
            speed,
            cells,
            lanes,
            docks,
            stations,
            places: Vec::new(),
            steps: Vec::new(),
            diameter_m: 0.0,
        };
        layout.build_distance_table()?;
        Ok(layout)
    }

    fn build_distance_table(&mut self) -> Result<()> {
        let mut places: Vec<Place> = (0..self.docks.len()).map(Place::Dock).collect();
        places.extend((0..self.stations.len()).map(Place::Station));
        places.extend((0..self.lanes.len()).map(Place::Lane));
        let coords: Vec<Coord> = places.iter().map(|p| self.coord(*p)).collect();
        let n = places.len();
        let mut steps = vec![0u32; n * n];
        let mut dist = vec![u32::MAX; self.cells.len()];
        let mut max_steps = 0;
        for (i, &src) in coords.iter().enumerate() {
            self.bfs(src, &mut dist, None);
            for (j, &dst) in coords.iter().enumerate() {
                let d = dist[self.index(dst)];
                if d == u32::MAX {
                    return Err(Error::Layout(format!(
                        "layout is disconnected: {:?} cannot reach {:?}",
                        places[i], places[j]
                    )));
                }
                steps[i * n + j] = d;
                max_steps = max_steps.max(d);
            }
        }
        self.places = places;
        self.steps = steps;
        self.diameter_m = f64::from(max_steps) * self.cell_size;
        Ok(())
    }

    fn index(&self, (r, c): Coord) -> usize {
        r * self.width + c
    }

    pub fn cell(&self, at: Coord) -> Cell {
        self.cells[self.index(at)]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coord(&self, place: Place) -> Coord {
        match place {
            Place::Dock(i) => self.docks[i].cell,
            Place::Station(i) => self.stations[i],
            Place::Lane(i) => self.lanes[i].front(),
        }
    }

    fn place_index(&self, place: Place) -> usize {
        match place {
            Place::Dock(i) => i,
            Place::Station(i) => self.docks.len() + i,
            Place::Lane(i) => self.docks.len() + self.stations.len() + i,
        }
    }

    /// Memoized shortest-path distance in meters.
    pub fn distance(&self, from: Place, to: Place) -> f64 {
        let n = self.places.len();
        f64::from(self.steps[self.place_index(from) * n + self.place_index(to)]) * self.cell_size
    }

    pub fn travel_time(&self, distance_m: f64) -> f64 {
        distance_m / self.speed
    }

    /// Largest distance between any two places.
    pub fn diameter(&self) -> f64 {
        self.diameter_m
    }

    pub fn input_docks(&self) -> impl Iterator<Item = &Dock> {
        self.docks.iter().filter(|d| d.kind == DockKind::Input)
    }

    pub fn output_docks(&self) -> impl Iterator<Item = &Dock> {
        self.docks.iter().filter(|d| d.kind == DockKind::Output)
    }

    pub fn total_capacity(&self) -> usize {
        self.lanes.iter().map(|l| l.capacity).sum()
    }

    /// Breadth-first search from `src`. Storage cells are reached but never
    /// expanded, except when the search starts in one.
    fn bfs(&self, src: Coord, dist: &mut [u32], mut parent: Option<&mut [usize]>) {
        dist.fill(u32::MAX);
        let s = self.index(src);
        dist[s] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(cur) = queue.pop_front() {
            let ci = self.index(cur);
            if ci != s && !self.cells[ci].is_traversable() {
                continue;
            }
            for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let Some(next) = step(cur, dr, dc, self.width, self.height) else {
                    continue;
                };
                let ni = self.index(next);
                if dist[ni] != u32::MAX {
                    continue;
                }
                // Storage-to-storage moves would cut through stacked pallets.
                if !self.cells[ci].is_traversable() && !self.cells[ni].is_traversable() {
                    continue;
                }
                dist[ni] = dist[ci] + 1;
                if let Some(p) = parent.as_deref_mut() {
                    p[ni] = ci;
                }
                queue.push_back(next);
            }
        }
    }

    /// Shortest route between two cells with the full cell path.
    pub fn route(&self, from: Coord, to: Coord) -> Result<RouteResult> {
        if from.0 >= self.height
            || from.1 >= self.width
            || to.0 >= self.height
            || to.1 >= self.width
        {
            return Err(Error::Unreachable { from, to });
        }
        let mut dist = vec![u32::MAX; self.cells.len()];
        let mut parent = vec![usize::MAX; self.cells.len()];
        self.bfs(from, &mut dist, Some(&mut parent));
        let ti = self.index(to);
        if dist[ti] == u32::MAX {
            return Err(Error::Unreachable { from, to });
        }
        let mut path = vec![to];
        let mut cur = ti;
        let si = self.index(from);
        while cur != si {
            cur = parent[cur];
            path.push((cur / self.width, cur % self.width));
        }
        path.reverse();
        let distance = f64::from(dist[ti]) * self.cell_size;
        Ok(RouteResult {
            distance,
            travel_time: self.travel_time(distance),
            path,
        })
    }
}

fn step((r, c): Coord, dr: isize, dc: isize, width: usize, height: usize) -> Option<Coord> {
    let nr = r.checked_add_signed(dr)?;
    let nc = c.checked_add_signed(dc)?;
    (nr < height && nc < width).then_some((nr, nc))
}
