//! In-process publish/subscribe bus with at-least-once delivery.
//!
//! Every subscription owns a FIFO queue drained by its own delivery thread.
//! A failed handler call is retried in place, up to `max_attempts`, before
//! the message is parked in the dead-letter journal; retrying in place keeps
//! per-topic publish order. Messages published to a topic nobody listens to
//! wait until a subscriber attaches or their TTL runs out.
//!
//! Journals (JSON lines under the bus directory): `published.jsonl`,
//! `acked.jsonl`, `dead_letter.jsonl`.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Weak};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const TOPIC_MEDIA_ADDED: &str = "media.added";
pub const TOPIC_EMBEDDINGS_REQUESTED: &str = "embeddings.requested";
pub const TOPIC_EMBEDDINGS_COMPLETED: &str = "embeddings.completed";
pub const TOPIC_VERSION_CREATED: &str = "dataset.version.created";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub topic: String,
    pub payload: Value,
    pub message_id: String,
    pub publish_time: DateTime<Utc>,
    pub delivery_attempts: u32,
}

/// Returning `Err` asks for redelivery.
pub type Handler = Arc<dyn Fn(&Message) -> std::result::Result<(), String> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubscriptionId(u64);

struct Subscription {
    id: SubscriptionId,
    topic: String,
    queue: Mutex<VecDeque<(Message, Instant)>>,
    ready: Condvar,
    closed: AtomicBool,
}

struct Journals {
    published: Option<File>,
    acked: Option<File>,
    dead: Option<File>,
}

struct Inner {
    max_attempts: u32,
    ttl: Duration,
    dir: Option<PathBuf>,
    journals: Mutex<Journals>,
    subs: Mutex<Vec<Arc<Subscription>>>,
    /// Messages waiting for a first subscriber, by topic.
    parked: Mutex<HashMap<String, VecDeque<(Message, Instant)>>>,
    outstanding: Mutex<usize>,
    idle: Condvar,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl Bus {
    /// A bus journaling into `dir`, or purely in memory when `dir` is `None`.
    pub fn new(dir: Option<&Path>, max_attempts: u32, ttl: Duration) -> Result<Self> {
        let open = |name: &str| -> Result<Option<File>> {
            match dir {
                None => Ok(None),
                Some(d) => {
                    std::fs::create_dir_all(d)?;
                    Ok(Some(OpenOptions::new().create(true).append(true).open(d.join(name))?))
                }
            }
        };
        Ok(Self {
            inner: Arc::new(Inner {
                max_attempts: max_attempts.max(1),
                ttl,
                dir: dir.map(Path::to_path_buf),
                journals: Mutex::new(Journals {
                    published: open("published.jsonl")?,
                    acked: open("acked.jsonl")?,
                    dead: open("dead_letter.jsonl")?,
                }),
                subs: Mutex::new(Vec::new()),
                parked: Mutex::new(HashMap::new()),
                outstanding: Mutex::new(0),
                idle: Condvar::new(),
                next_id: AtomicU64::new(1),
            }),
        })
    }

    pub fn from_config(cfg: &crate::Config, dir: Option<&Path>) -> Result<Self> {
        Self::new(dir, cfg.bus.max_attempts, Duration::from_secs(cfg.bus.ttl_seconds))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.inner.dir.as_deref()
    }

    pub fn publish(&self, topic: &str, payload: Value) -> Result<String> {
        if topic.is_empty() {
            return Err(Error::InvalidArgument("topic must not be empty".into()));
        }
        let msg = Message {
            topic: topic.to_string(),
            payload,
            message_id: uuid::Uuid::new_v4().to_string(),
            publish_time: Utc::now(),
            delivery_attempts: 0,
        };
        self.journal(|j| &mut j.published, &serde_json::to_value(&msg)?)?;
        let now = Instant::now();
        let subs: Vec<_> = self
            .inner
            .subs
            .lock()
            .iter()
            .filter(|s| s.topic == topic && !s.closed.load(Ordering::SeqCst))
            .cloned()
            .collect();
        if subs.is_empty() {
            self.inner
                .parked
                .lock()
                .entry(topic.to_string())
                .or_default()
                .push_back((msg.clone(), now));
        } else {
            for s in subs {
                self.enqueue(&s, msg.clone(), now);
            }
        }
        Ok(msg.message_id)
    }

    fn enqueue(&self, sub: &Subscription, msg: Message, at: Instant) {
        *self.inner.outstanding.lock() += 1;
        sub.queue.lock().push_back((msg, at));
        sub.ready.notify_one();
    }

    /// Attaches `handler` to `topic`, first receiving any unexpired messages
    /// that were waiting for a subscriber.
    pub fn subscribe<F>(&self, topic: &str, handler: F) -> SubscriptionId
    where
        F: Fn(&Message) -> std::result::Result<(), String> + Send + Sync + 'static,
    {
        let id = SubscriptionId(self.inner.next_id.fetch_add(1, Ordering::SeqCst));
        let sub = Arc::new(Subscription {
            id,
            topic: topic.to_string(),
            queue: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            closed: AtomicBool::new(false),
        });
        {
            let mut subs = self.inner.subs.lock();
            let waiting = self.inner.parked.lock().remove(topic).unwrap_or_default();
            for (msg, at) in waiting {
                if at.elapsed() <= self.inner.ttl {
                    self.enqueue(&sub, msg, at);
                }
            }
            subs.push(sub.clone());
        }
        let weak = Arc::downgrade(&self.inner);
        let handler: Handler = Arc::new(handler);
        std::thread::Builder::new()
            .name(format!("bus-{topic}"))
            .spawn(move || deliver_loop(&weak, &sub, &handler))
            .expect("spawn bus delivery thread");
        id
    }

    pub fn unsubscribe(&self, id: SubscriptionId) {
        let mut subs = self.inner.subs.lock();
        if let Some(pos) = subs.iter().position(|s| s.id == id) {
            let sub = subs.remove(pos);
            sub.closed.store(true, Ordering::SeqCst);
            sub.ready.notify_all();
        }
    }

    fn deliver(&self, sub: &Subscription, handler: &Handler, mut msg: Message) {
        loop {
            msg.delivery_attempts += 1;
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| handler(&msg)))
                .unwrap_or_else(|_| Err("handler panicked".to_string()));
            match outcome {
                Ok(()) => {
                    let line = json!({
                        "message_id": msg.message_id,
                        "topic": msg.topic,
                        "subscription": sub.id.0,
                        "delivery_attempts": msg.delivery_attempts,
                        "acked_at": Utc::now(),
                    });
                    let _ = self.journal(|j| &mut j.acked, &line);
                    return;
                }
                Err(reason) if msg.delivery_attempts >= self.inner.max_attempts => {
                    tracing::warn!(topic = %msg.topic, id = %msg.message_id, %reason, "message dead-lettered");
                    let line = json!({
                        "message": msg,
                        "subscription": sub.id.0,
                        "last_error": reason,
                        "parked_at": Utc::now(),
                    });
                    let _ = self.journal(|j| &mut j.dead, &line);
                    return;
                }
                Err(reason) => {
                    tracing::debug!(topic = %msg.topic, attempt = msg.delivery_attempts, %reason, "redelivering");
                }
            }
        }
    }

    fn settle(&self, n: usize) {
        if n == 0 {
            return;
        }
        let mut out = self.inner.outstanding.lock();
        *out -= n;
        if *out == 0 {
            self.inner.idle.notify_all();
        }
    }

    /// Blocks until every queued delivery has been acked or dead-lettered.
    /// Returns false on timeout.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut out = self.inner.outstanding.lock();
        while *out > 0 {
            if self.inner.idle.wait_until(&mut out, deadline).timed_out() {
                return *out == 0;
            }
        }
        true
    }

    fn journal(&self, pick: impl FnOnce(&mut Journals) -> &mut Option<File>, line: &Value) -> Result<()> {
        let mut journals = self.inner.journals.lock();
        if let Some(f) = pick(&mut journals) {
            let mut bytes = serde_json::to_vec(line)?;
            bytes.push(b'\n');
            f.write_all(&bytes)?;
        }
        Ok(())
    }
}

/// Holds the bus only weakly while idle so dropping the last [`Bus`] handle
/// stops delivery threads.
fn deliver_loop(inner: &Weak<Inner>, sub: &Subscription, handler: &Handler) {
    loop {
        let next = {
            let mut q = sub.queue.lock();
            loop {
                if sub.closed.load(Ordering::SeqCst) {
                    let dropped = q.len();
                    q.clear();
                    drop(q);
                    if let Some(inner) = inner.upgrade() {
                        Bus { inner }.settle(dropped);
                    }
                    return;
                }
                if let Some(item) = q.pop_front() {
                    break item;
                }
                sub.ready.wait(&mut q);
            }
        };
        let Some(inner) = inner.upgrade() else {
            return;
        };
        let bus = Bus { inner };
        bus.deliver(sub, handler, next.0);
        bus.settle(1);
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        for s in self.subs.get_mut().iter() {
            s.closed.store(true, Ordering::SeqCst);
            s.ready.notify_all();
        }
    }
}

/// Reads a bus journal back as JSON values.
pub fn read_journal(dir: &Path, name: &str) -> Result<Vec<Value>> {
    let text = match std::fs::read_to_string(dir.join(name)) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
