use crate::compute::Var;
use crate::data::PAD;
use crate::error::{Error, Result};

/// Per-user pools of items retrieved in earlier rounds, stored in
/// left-aligned slots of fixed capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemContext {
    capacity: usize,
    pools: Vec<Vec<usize>>,
}

impl ItemContext {
    pub fn new(rows: usize, capacity: usize) -> Self {
        Self {
            capacity,
            pools: vec![Vec::new(); rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.pools.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn pool(&self, row: usize) -> &[usize] {
        &self.pools[row]
    }

    /// True when every pool is empty.
    pub fn is_empty(&self) -> bool {
        self.pools.iter().all(Vec::is_empty)
    }

    /// Appends `ids` to the pool of `row`.
    pub fn push(&mut self, row: usize, ids: &[usize]) -> Result<()> {
        let pool = &mut self.pools[row];
        if pool.len() + ids.len() > self.capacity {
            return Err(Error::Invalid(format!(
                "item context overflow: {} + {} > capacity {}",
                pool.len(),
                ids.len(),
                self.capacity
            )));
        }
        for &id in ids {
            if id == PAD || pool.contains(&id) {
                return Err(Error::Invalid(format!("item {id} cannot join the context pool")));
            }
            pool.push(id);
        }
        Ok(())
    }

    /// Row-major `[rows, capacity]` ids (pad-filled) and validity mask.
    pub fn padded(&self) -> (Vec<usize>, Vec<bool>) {
        let mut ids = Vec::with_capacity(self.rows() * self.capacity);
        let mut mask = Vec::with_capacity(self.rows() * self.capacity);
        for pool in &self.pools {
            for s in 0..self.capacity {
                ids.push(pool.get(s).copied().unwrap_or(PAD));
                mask.push(s < pool.len());
            }
        }
        (ids, mask)
    }
}

/// Adapted user vectors of earlier rounds, each `[B, d]` on the current tape.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserContextStack {
    entries: Vec<Var>,
}

impl UserContextStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Var] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Appends the round's adapted user vector.
pub fn extend_user_context(stack: &mut UserContextStack, v: Var) {
    stack.entries.push(v);
}
