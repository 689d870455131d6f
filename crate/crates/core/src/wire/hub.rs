use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::codec::encode_frame;
use crate::edge::FrameFeatureSet;

/// One frame, encoded once and shared by every reader.
#[derive(Debug, PartialEq, Eq)]
pub struct EncodedFrame {
    pub seq: u64,
    pub frame_index: u64,
    pub bytes: Arc<[u8]>,
}

#[derive(Debug)]
struct HubState {
    recent: VecDeque<Arc<EncodedFrame>>,
    next_seq: u64,
    closed: bool,
    encoded: u64,
}

/// Single-publisher, many-reader fan-out of encoded frames.
///
/// Readers start at the next frame published after they subscribe. A bounded window of
/// recent frames absorbs slow readers; a reader that falls further behind is told it
/// lagged instead of silently skipping frames.
#[derive(Debug)]
pub struct FeatureHub {
    state: Mutex<HubState>,
    changed: Condvar,
    window: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Next {
    Frame(Arc<EncodedFrame>),
    Timeout,
    /// The publisher finished; no more frames will come.
    Closed,
    /// Frames were evicted before this reader consumed them.
    Lagged { missed: u64 },
}

impl FeatureHub {
    pub fn new(window: usize) -> Arc<Self> {
        Arc::new(FeatureHub {
            state: Mutex::new(HubState {
                recent: VecDeque::with_capacity(window),
                next_seq: 0,
                closed: false,
                encoded: 0,
            }),
            changed: Condvar::new(),
            window: window.max(1),
        })
    }

    pub fn publish(&self, frame: &FrameFeatureSet) -> Arc<EncodedFrame> {
        let bytes: Arc<[u8]> = encode_frame(frame).into();
        let mut st = self.state.lock().unwrap();
        let encoded = Arc::new(EncodedFrame {
            seq: st.next_seq,
            frame_index: frame.frame_index,
            bytes,
        });
        st.next_seq += 1;
        st.encoded += 1;
        st.recent.push_back(encoded.clone());
        while st.recent.len() > self.window {
            st.recent.pop_front();
        }
        drop(st);
        self.changed.notify_all();
        encoded
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.changed.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }

    /// Number of encode operations performed; one per published frame.
    pub fn frames_encoded(&self) -> u64 {
        self.state.lock().unwrap().encoded
    }

    pub fn latest(&self) -> Option<Arc<EncodedFrame>> {
        self.state.lock().unwrap().recent.back().cloned()
    }

    pub fn subscribe(self: &Arc<Self>) -> Subscription {
        let next_seq = self.state.lock().unwrap().next_seq;
        Subscription {
            hub: Arc::clone(self),
            next_seq,
        }
    }
}

#[derive(Debug)]
pub struct Subscription {
    hub: Arc<FeatureHub>,
    next_seq: u64,
}

impl Subscription {
    pub fn next_timeout(&mut self, timeout: Duration) -> Next {
        let hub = &self.hub;
        let mut st = hub.state.lock().unwrap();
        loop {
            if let Some(front) = st.recent.front() {
                if front.seq > self.next_seq {
                    let missed = front.seq - self.next_seq;
                    self.next_seq = front.seq;
                    return Next::Lagged { missed };
                }
                if self.next_seq < st.next_seq {
                    let idx = (self.next_seq - front.seq) as usize;
                    let frame = st.recent[idx].clone();
                    self.next_seq += 1;
                    return Next::Frame(frame);
                }
            }
            if st.closed {
                return Next::Closed;
            }
            let (guard, res) = hub.changed.wait_timeout(st, timeout).unwrap();
            st = guard;
            if res.timed_out() && self.next_seq >= st.next_seq && !st.closed {
                return Next::Timeout;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Fixed3;

    fn frame(i: u64) -> FrameFeatureSet {
        FrameFeatureSet::empty(i, "cam-01", Fixed3::from_millis(i * 200))
    }

    #[test]
    fn readers_share_encoding() {
        let hub = FeatureHub::new(16);
        let mut a = hub.subscribe();
        let mut b = hub.subscribe();
        for i in 0..10 {
            hub.publish(&frame(i));
        }
        hub.close();
        for _ in 0..10 {
            let (Next::Frame(x), Next::Frame(y)) = (a.next_timeout(Duration::ZERO), b.next_timeout(Duration::ZERO))
            else {
                panic!("expected frames");
            };
            assert!(Arc::ptr_eq(&x.bytes, &y.bytes));
        }
        assert_eq!(a.next_timeout(Duration::ZERO), Next::Closed);
        assert_eq!(hub.frames_encoded(), 10);
    }

    #[test]
    fn late_subscriber_starts_live() {
        let hub = FeatureHub::new(16);
        hub.publish(&frame(0));
        let mut s = hub.subscribe();
        assert_eq!(s.next_timeout(Duration::from_millis(5)), Next::Timeout);
        hub.publish(&frame(1));
        match s.next_timeout(Duration::ZERO) {
            Next::Frame(f) => assert_eq!(f.frame_index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slow_reader_is_told_it_lagged() {
        let hub = FeatureHub::new(2);
        let mut s = hub.subscribe();
        for i in 0..5 {
            hub.publish(&frame(i));
        }
        assert_eq!(s.next_timeout(Duration::ZERO), Next::Lagged { missed: 3 });
        match s.next_timeout(Duration::ZERO) {
            Next::Frame(f) => assert_eq!(f.frame_index, 3),
            other => panic!("{other:?}"),
        }
    }
}
