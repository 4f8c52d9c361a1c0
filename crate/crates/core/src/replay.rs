//! FIFO replay buffer over transition records and uniform n-step batch
//! sampling. Windows never span episode boundaries: candidate starts whose
//! window would cross one are excluded from sampling entirely, and a window
//! ending in a genuinely terminal state has its bootstrap discount zeroed.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::StreamRng;
use crate::tensor::TensorBuf;

#[derive(Debug, Clone)]
pub struct ReplayRecord {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r_ext: f64,
    pub s_next: Vec<f64>,
    /// Skill active when the action was taken.
    pub z: Vec<f64>,
    pub episode: u64,
    /// True terminal state (not a time limit).
    pub terminal: bool,
}

/// A sampled n-step batch. `z` is the skill attached to the window's first
/// transition; `s_n` is the state n steps ahead of `s`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub s: TensorBuf,
    pub a: TensorBuf,
    pub s_n: TensorBuf,
    /// Discounted n-step extrinsic reward sum per row.
    pub reward_n: Vec<f64>,
    pub z: TensorBuf,
    /// Discount to apply to the bootstrapped value: gamma^n, or 0 when the
    /// window ends in a terminal state.
    pub bootstrap: Vec<f64>,
    /// The n of the n-step windows, not the row count.
    pub horizon: usize,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.s.rows()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    skill_dim: usize,
    records: VecDeque<ReplayRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize, skill_dim: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 || action_dim == 0 {
            return Err(Error::Config(format!(
                "replay buffer needs positive capacity and widths, got cap {capacity}, obs {obs_dim}, act {action_dim}"
            )));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dim,
            action_dim,
            skill_dim,
            records: VecDeque::with_capacity(capacity.min(1 << 20)),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn record(&self, i: usize) -> &ReplayRecord {
        &self.records[i]
    }

    /// Append one transition, evicting the oldest when full.
    pub fn push(&mut self, rec: ReplayRecord) -> Result<()> {
        if rec.s.len() != self.obs_dim || rec.s_next.len() != self.obs_dim {
            return Err(Error::Contract(format!(
                "state width {} / {} does not match buffer obs_dim {}",
                rec.s.len(),
                rec.s_next.len(),
                self.obs_dim
            )));
        }
        if rec.a.len() != self.action_dim {
            return Err(Error::Contract(format!(
                "action width {} does not match buffer action_dim {}",
                rec.a.len(),
                self.action_dim
            )));
        }
        if rec.z.len() != self.skill_dim {
            return Err(Error::Contract(format!(
                "skill width {} does not match buffer skill_dim {}",
                rec.z.len(),
                self.skill_dim
            )));
        }
        if !math::all_finite(&rec.s)
            || !math::all_finite(&rec.a)
            || !math::all_finite(&rec.s_next)
            || !math::all_finite(&rec.z)
            || !rec.r_ext.is_finite()
        {
            return Err(Error::Contract(format!(
                "non-finite values pushed to replay (episode {})",
                rec.episode
            )));
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(rec);
        Ok(())
    }

    fn window_valid(&self, start: usize, n: usize) -> bool {
        self.records[start].episode == self.records[start + n - 1].episode
    }

    /// Uniformly sample `batch_size` n-step windows (with replacement).
    pub fn sample(
        &self,
        rng: &mut StreamRng,
        batch_size: usize,
        n: usize,
        gamma: f64,
    ) -> Result<Batch> {
        if batch_size == 0 || n == 0 {
            return Err(Error::Contract(format!(
                "batch_size {batch_size} and n {n} must be positive"
            )));
        }
        if self.records.len() < n {
            return Err(Error::NotReady);
        }
        let starts_total = self.records.len() - n + 1;

        let mut s = TensorBuf::zeros(alloc::vec![batch_size, self.obs_dim]);
        let mut a = TensorBuf::zeros(alloc::vec![batch_size, self.action_dim]);
        let mut s_n = TensorBuf::zeros(alloc::vec![batch_size, self.obs_dim]);
        let mut z = TensorBuf::zeros(alloc::vec![batch_size, self.skill_dim]);
        let mut reward_n = Vec::with_capacity(batch_size);
        let mut bootstrap = Vec::with_capacity(batch_size);
        let gamma_n = math::powi(gamma, n as u32);

        // Rejection keeps the draw uniform over valid windows; the bounded
        // fallback enumerates them when episodes are so short that almost
        // every window crosses a boundary.
        let mut valid_starts: Option<Vec<usize>> = None;
        for bi in 0..batch_size {
            let mut start = None;
            for _ in 0..32 {
                let cand = rng.index(starts_total);
                if self.window_valid(cand, n) {
                    start = Some(cand);
                    break;
                }
            }
            let start = match start {
                Some(i) => i,
                None => {
                    let list = valid_starts.get_or_insert_with(|| {
                        (0..starts_total)
                            .filter(|&i| self.window_valid(i, n))
                            .collect()
                    });
                    if list.is_empty() {
                        return Err(Error::NotReady);
                    }
                    list[rng.index(list.len())]
                }
            };

            let first = &self.records[start];
            s.row_mut(bi).copy_from_slice(&first.s);
            a.row_mut(bi).copy_from_slice(&first.a);
            z.row_mut(bi).copy_from_slice(&first.z);
            let mut acc = 0.0;
            let mut disc = 1.0;
            for j in 0..n {
                acc += disc * self.records[start + j].r_ext;
                disc *= gamma;
            }
            reward_n.push(acc);
            let last = &self.records[start + n - 1];
            s_n.row_mut(bi).copy_from_slice(&last.s_next);
            bootstrap.push(if last.terminal { 0.0 } else { gamma_n });
        }

        Ok(Batch {
            s,
            a,
            s_n,
            reward_n,
            z,
            bootstrap,
            horizon: n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use alloc::vec;

    fn rec(i: usize, episode: u64, r: f64, terminal: bool) -> ReplayRecord {
        ReplayRecord {
            s: vec![i as f64],
            a: vec![0.0],
            r_ext: r,
            s_next: vec![i as f64 + 1.0],
            z: vec![],
            episode,
            terminal,
        }
    }

    fn buffer(cap: usize) -> ReplayBuffer {
        ReplayBuffer::new(cap, 1, 1, 0).unwrap()
    }

    #[test]
    fn push_validates_widths_and_finiteness() {
        let mut buf = ReplayBuffer::new(8, 2, 1, 3).unwrap();
        let bad = ReplayRecord {
            s: vec![0.0],
            a: vec![0.0],
            r_ext: 0.0,
            s_next: vec![0.0, 0.0],
            z: vec![0.0; 3],
            episode: 0,
            terminal: false,
        };
        assert!(matches!(buf.push(bad), Err(Error::Contract(_))));
        let nan = ReplayRecord {
            s: vec![0.0, 0.0],
            a: vec![f64::NAN],
            r_ext: 0.0,
            s_next: vec![0.0, 0.0],
            z: vec![0.0; 3],
            episode: 0,
            terminal: false,
        };
        assert!(buf.push(nan).is_err());
        assert!(buf.is_empty());
    }

    #[test]
    fn eviction_drops_oldest_first() {
        let mut buf = buffer(3);
        for i in 0..5 {
            buf.push(rec(i, 0, 0.0, false)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.record(0).s, vec![2.0]);
        assert_eq!(buf.record(2).s, vec![4.0]);
    }

    #[test]
    fn nstep_reward_matches_hand_sum() {
        let mut buf = buffer(8);
        for i in 0..3 {
            buf.push(rec(i, 0, 1.0, false)).unwrap();
        }
        let mut rng = SeedTree::new(1).stream("s");
        let b = buf.sample(&mut rng, 16, 3, 0.99).unwrap();
        let expect: f64 = 1.0 + 0.99 + 0.99 * 0.99;
        assert!((expect - 2.9701).abs() < 1e-12);
        for bi in 0..16 {
            assert_eq!(b.reward_n[bi], expect);
            assert_eq!(b.bootstrap[bi], 0.99f64 * 0.99 * 0.99);
            assert_eq!(b.s.row(bi), &[0.0]);
            assert_eq!(b.s_n.row(bi), &[3.0]);
        }
    }

    #[test]
    fn single_step_batch_reduces_to_transition() {
        let mut buf = buffer(8);
        buf.push(rec(7, 0, 2.5, false)).unwrap();
        let mut rng = SeedTree::new(2).stream("s");
        let b = buf.sample(&mut rng, 4, 1, 0.9).unwrap();
        for bi in 0..4 {
            assert_eq!(b.reward_n[bi], 2.5);
            assert_eq!(b.s.row(bi), &[7.0]);
            assert_eq!(b.s_n.row(bi), &[8.0]);
            assert_eq!(b.bootstrap[bi], 0.9);
        }
    }

    #[test]
    fn windows_never_cross_episode_boundaries() {
        let mut buf = buffer(64);
        // episodes of length 4: ids 0,0,0,0,1,1,1,1,...
        for i in 0..32 {
            buf.push(rec(i, (i / 4) as u64, 0.0, false)).unwrap();
        }
        let mut rng = SeedTree::new(3).stream("s");
        let b = buf.sample(&mut rng, 512, 3, 0.99).unwrap();
        for bi in 0..512 {
            let start = b.s.row(bi)[0] as usize;
            assert_eq!(start / 4, (start + 2) / 4, "window crossed episodes");
            assert_eq!(b.s_n.row(bi)[0] as usize, start + 3);
        }
    }

    #[test]
    fn terminal_window_zeroes_bootstrap() {
        let mut buf = buffer(8);
        buf.push(rec(0, 0, 1.0, false)).unwrap();
        // terminal end of episode 0
        buf.push(rec(1, 0, 1.0, true)).unwrap();
        buf.push(rec(2, 1, 1.0, false)).unwrap();
        let mut rng = SeedTree::new(4).stream("s");
        let b = buf.sample(&mut rng, 64, 2, 0.5).unwrap();
        for bi in 0..64 {
            let start = b.s.row(bi)[0] as usize;
            assert_eq!(start, 0, "only one valid 2-step window exists");
            assert_eq!(b.bootstrap[bi], 0.0);
            assert_eq!(b.reward_n[bi], 1.5);
        }
    }

    #[test]
    fn sampling_is_uniform_over_starts() {
        let mut buf = buffer(16);
        for i in 0..10 {
            buf.push(rec(i, 0, 0.0, false)).unwrap();
        }
        let mut rng = SeedTree::new(5).stream("s");
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws / 100 {
            let b = buf.sample(&mut rng, 100, 1, 0.99).unwrap();
            for bi in 0..100 {
                counts[b.s.row(bi)[0] as usize] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 9 degrees of freedom; 27.9 is the 0.1% tail.
        assert!(chi2 < 27.9, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn not_ready_until_a_window_exists() {
        let buf = buffer(8);
        let mut rng = SeedTree::new(6).stream("s");
        assert!(matches!(buf.sample(&mut rng, 1, 1, 0.99), Err(Error::NotReady)));

        // Three one-step episodes: no 2-step window is valid.
        let mut buf = buffer(8);
        for i in 0..3 {
            buf.push(rec(i, i as u64, 0.0, false)).unwrap();
        }
        assert!(matches!(buf.sample(&mut rng, 4, 2, 0.99), Err(Error::NotReady)));
        assert!(buf.sample(&mut rng, 4, 1, 0.99).is_ok());
    }
}
