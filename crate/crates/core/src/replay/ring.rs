use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{invalid_input, Result};
use crate::streams::Example;

/// Per-task FIFO segments of `capacity / task_count` entries each.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRingBuffer {
    segments: Vec<VecDeque<Example>>,
    segment_capacity: usize,
}

impl TaskRingBuffer {
    pub fn new(capacity: usize, task_count: usize) -> Self {
        let segment_capacity = if task_count == 0 { 0 } else { capacity / task_count };
        Self { segments: (0..task_count).map(|_| VecDeque::with_capacity(segment_capacity)).collect(), segment_capacity }
    }

    pub fn segment_capacity(&self) -> usize {
        self.segment_capacity
    }

    pub fn task_count(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, task: usize) -> &VecDeque<Example> {
        &self.segments[task]
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends to the example's task segment, evicting its oldest entry when full.
    pub fn update(&mut self, example: Example) -> Result<()> {
        let task_count = self.segments.len();
        let cap = self.segment_capacity;
        let seg = self
            .segments
            .get_mut(example.task_id)
            .ok_or_else(|| invalid_input!("task {} outside ring buffer of {task_count} tasks", example.task_id))?;
        if cap == 0 {
            return Ok(());
        }
        if seg.len() == cap {
            seg.pop_front();
        }
        seg.push_back(example);
        Ok(())
    }
}
