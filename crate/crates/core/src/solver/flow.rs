//! Dinic max-flow over a static arc set with mutable residual capacities.

use std::collections::VecDeque;

pub(crate) type EdgeId = usize;

const UNSEEN: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    start: Vec<usize>,
    adj: Vec<EdgeId>,
    to: Vec<u32>,
    residual: Vec<u32>,
    capacity: Vec<u32>,
    level: Vec<u32>,
    cursor: Vec<usize>,
}

/// Collects arcs before freezing them into adjacency arrays.
#[derive(Debug, Default)]
pub(crate) struct NetworkBuilder {
    nodes: usize,
    from: Vec<u32>,
    to: Vec<u32>,
    capacity: Vec<u32>,
}

impl NetworkBuilder {
    pub fn new(nodes: usize) -> Self {
        NetworkBuilder {
            nodes,
            ..Default::default()
        }
    }

    /// Adds `u -> v` and its reverse; the forward arc's id is returned and the
    /// reverse is `id ^ 1`.
    pub fn add(&mut self, u: usize, v: usize, cap: u32) -> EdgeId {
        let id = self.from.len();
        self.from.extend([u as u32, v as u32]);
        self.to.extend([v as u32, u as u32]);
        self.capacity.extend([cap, 0]);
        id
    }

    pub fn build(self) -> FlowNetwork {
        let mut start = vec![0usize; self.nodes + 1];
        for &u in &self.from {
            start[u as usize + 1] += 1;
        }
        for v in 0..self.nodes {
            start[v + 1] += start[v];
        }
        let mut fill = start.clone();
        let mut adj = vec![0; self.from.len()];
        for (e, &u) in self.from.iter().enumerate() {
            adj[fill[u as usize]] = e;
            fill[u as usize] += 1;
        }
        FlowNetwork {
            start,
            adj,
            to: self.to,
            residual: self.capacity.clone(),
            capacity: self.capacity,
            level: vec![UNSEEN; self.nodes],
            cursor: vec![0; self.nodes],
        }
    }
}

impl FlowNetwork {
    pub fn flow(&self, e: EdgeId) -> u32 {
        self.capacity[e] - self.residual[e]
    }

    /// Pushes `amount` back along a forward arc that carries at least that much.
    pub fn unpush(&mut self, e: EdgeId, amount: u32) {
        debug_assert!(self.flow(e) >= amount);
        self.residual[e] += amount;
        self.residual[e ^ 1] -= amount;
    }

    /// Sets a forward arc's capacity. The arc must not carry more than `cap`.
    pub fn set_capacity(&mut self, e: EdgeId, cap: u32) {
        let flow = self.flow(e);
        assert!(flow <= cap, "arc carries {flow} > {cap}");
        self.capacity[e] = cap;
        self.residual[e] = cap - flow;
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(UNSEEN);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[self.start[v]..self.start[v + 1]] {
                let w = self.to[e] as usize;
                if self.residual[e] > 0 && self.level[w] == UNSEEN {
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        self.level[t] != UNSEEN
    }

    /// Finds one augmenting path in the level graph, pushes its bottleneck and
    /// returns the amount pushed (0 when the level graph is exhausted).
    fn augment(&mut self, s: usize, t: usize, path: &mut Vec<EdgeId>) -> u32 {
        path.clear();
        let mut v = s;
        loop {
            if v == t {
                let amount = path.iter().map(|&e| self.residual[e]).min().unwrap_or(0);
                for &e in path.iter() {
                    self.residual[e] -= amount;
                    self.residual[e ^ 1] += amount;
                }
                return amount;
            }
            let end = self.start[v + 1];
            let mut advanced = false;
            while self.cursor[v] < end {
                let e = self.adj[self.cursor[v]];
                let w = self.to[e] as usize;
                if self.residual[e] > 0 && self.level[w] == self.level[v] + 1 {
                    path.push(e);
                    v = w;
                    advanced = true;
                    break;
                }
                self.cursor[v] += 1;
            }
            if !advanced {
                // dead end: retreat and skip the arc that led here
                self.level[v] = UNSEEN;
                match path.pop() {
                    None => return 0,
                    Some(e) => {
                        v = self.to[e ^ 1] as usize;
                        self.cursor[v] += 1;
                    }
                }
            }
        }
    }

    /// Augments the current flow to a maximum; returns the amount added.
    pub fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut total = 0u64;
        let mut path = Vec::new();
        while self.bfs(s, t) {
            self.cursor.copy_from_slice(&self.start[..self.start.len() - 1]);
            loop {
                let pushed = self.augment(s, t, &mut path);
                if pushed == 0 {
                    break;
                }
                total += u64::from(pushed);
            }
        }
        total
    }
}
