//! Replay memory `D = (D_1, ..., D_H)` with one transition per episode per
//! step, and aligned mini-batch sampling.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::index;
use rand::Rng;

use crate::mdp::Transition;
use crate::{Error, Result};

/// `t~ = ceil(rho t)`, kept in `[1, t]`.
pub fn minibatch_size(t: usize, rho: f64) -> usize {
    let raw = Float::ceil(rho * t as f64);
    (raw as usize).clamp(1, t.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMemory {
    horizon: usize,
    capacity: Option<usize>,
    stores: Vec<VecDeque<Transition>>,
    episode_ids: VecDeque<usize>,
    next_id: usize,
}

impl ReplayMemory {
    /// `capacity` is the number of episodes kept (oldest evicted first).
    pub fn new(horizon: usize, capacity: Option<usize>) -> Self {
        Self {
            horizon,
            capacity: capacity.filter(|&c| c > 0),
            stores: (0..horizon).map(|_| VecDeque::new()).collect(),
            episode_ids: VecDeque::new(),
            next_id: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Episodes currently held (`|D_h|` for every `h`).
    pub fn len(&self) -> usize {
        self.episode_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode_ids.is_empty()
    }

    /// Appends one episode: exactly one transition for each `h = 1..=H`, in order.
    pub fn store(&mut self, episode: Vec<Transition>) -> Result<()> {
        if episode.len() != self.horizon {
            return Err(Error::Domain(alloc::format!(
                "episode has {} transitions, expected {}",
                episode.len(),
                self.horizon
            )));
        }
        if let Some((i, tr)) = episode.iter().enumerate().find(|(i, tr)| tr.h != i + 1) {
            return Err(Error::Domain(alloc::format!(
                "transition {i} carries step {}, expected {}",
                tr.h,
                i + 1
            )));
        }
        for (store, tr) in self.stores.iter_mut().zip(episode) {
            store.push_back(tr);
        }
        self.episode_ids.push_back(self.next_id);
        self.next_id += 1;
        if let Some(cap) = self.capacity {
            while self.episode_ids.len() > cap {
                self.episode_ids.pop_front();
                for store in &mut self.stores {
                    store.pop_front();
                }
            }
        }
        Ok(())
    }

    /// `D_h` in storage order.
    pub fn step_store(&self, h: usize) -> &VecDeque<Transition> {
        &self.stores[h - 1]
    }

    /// Global episode number of each stored slot.
    pub fn episode_ids(&self) -> &VecDeque<usize> {
        &self.episode_ids
    }

    /// Draws `t_tilde` distinct slots uniformly without replacement. The
    /// same slots index every `D_h`.
    pub fn sample_indices<R: Rng + ?Sized>(&self, t_tilde: usize, rng: &mut R) -> Result<Vec<usize>> {
        let available = self.len();
        if t_tilde > available {
            return Err(Error::InsufficientData {
                requested: t_tilde,
                available,
            });
        }
        Ok(index::sample(rng, available, t_tilde).into_vec())
    }

    /// Transitions of `D_h` at the given slots.
    pub fn batch(&self, h: usize, slots: &[usize]) -> Vec<&Transition> {
        let store = &self.stores[h - 1];
        slots.iter().map(|&i| &store[i]).collect()
    }

    pub fn sample_minibatch<R: Rng + ?Sized>(
        &self,
        h: usize,
        t_tilde: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        if h < 1 || h > self.horizon {
            return Err(Error::domain("step outside 1..=H"));
        }
        let slots = self.sample_indices(t_tilde, rng)?;
        Ok(self.batch(h, &slots))
    }
}
