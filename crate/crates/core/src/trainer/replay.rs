use rand::Rng;

use crate::rng::StreamRng;
use crate::{Error, Result};

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest item once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `n` items drawn uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<&T>> {
        if self.items.is_empty() {
            return Err(Error::Config("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn keeps_the_last_items() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(i);
        }
        let mut held: Vec<i32> = b.iter().copied().collect();
        held.sort();
        assert_eq!(held, vec![2, 3, 4]);
    }

    #[test]
    fn samples_with_replacement_reproducibly() {
        let mut b = ReplayBuffer::new(4).unwrap();
        for i in 0..4 {
            b.push(i);
        }
        let s1: Vec<i32> = b.sample(16, &mut stream_rng(1, 0)).unwrap().into_iter().copied().collect();
        let s2: Vec<i32> = b.sample(16, &mut stream_rng(1, 0)).unwrap().into_iter().copied().collect();
        assert_eq!(s1.len(), 16);
        assert_eq!(s1, s2);
        assert!(ReplayBuffer::<i32>::new(2).unwrap().sample(1, &mut stream_rng(0, 0)).is_err());
        assert!(ReplayBuffer::<i32>::new(0).is_err());
    }

    #[test]
    fn never_yields_overwritten_items() {
        let mut b = ReplayBuffer::new(10).unwrap();
        let mut rng = stream_rng(2, 0);
        for i in 0..100 {
            b.push(i);
            for &x in b.sample(8, &mut rng).unwrap() {
                assert!(x > i - 10 && x <= i);
            }
        }
    }
}
