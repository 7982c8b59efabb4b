//! Resident-set sampling from `/proc/self/status`.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

pub const SAMPLE_INTERVAL: Duration = Duration::from_millis(10);

/// Current resident set size in bytes, if the platform exposes it.
pub fn rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Returns freed heap pages to the OS so that the next baseline is not
/// inflated by memory the allocator kept around.
pub fn release_free_memory() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    {
        extern "C" {
            fn malloc_trim(pad: usize) -> i32;
        }
        // SAFETY: glibc's malloc_trim has no preconditions.
        unsafe {
            malloc_trim(0);
        }
    }
}

/// Background sampler tracking the peak resident size.
pub struct RssProbe {
    stop: Arc<AtomicBool>,
    peak: Arc<AtomicU64>,
    samples: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProbeSummary {
    pub peak_bytes: u64,
    pub samples: u64,
}

impl RssProbe {
    pub fn start(interval: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let peak = Arc::new(AtomicU64::new(rss_bytes().unwrap_or(0)));
        let samples = Arc::new(AtomicU64::new(1));
        let handle = {
            let (stop, peak, samples) = (stop.clone(), peak.clone(), samples.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    if let Some(r) = rss_bytes() {
                        peak.fetch_max(r, Ordering::Relaxed);
                        samples.fetch_add(1, Ordering::Relaxed);
                    }
                    std::thread::sleep(interval);
                }
            })
        };
        Self {
            stop,
            peak,
            samples,
            handle: Some(handle),
        }
    }

    pub fn stop(mut self) -> ProbeSummary {
        self.finish()
    }

    fn finish(&mut self) -> ProbeSummary {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        if let Some(r) = rss_bytes() {
            self.peak.fetch_max(r, Ordering::Relaxed);
        }
        ProbeSummary {
            peak_bytes: self.peak.load(Ordering::Relaxed),
            samples: self.samples.load(Ordering::Relaxed) + 1,
        }
    }
}

impl Drop for RssProbe {
    fn drop(&mut self) {
        self.finish();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_sees_allocation() {
        if rss_bytes().is_none() {
            return;
        }
        let probe = RssProbe::start(Duration::from_millis(1));
        let before = rss_bytes().unwrap();
        let v = vec![1u8; 32 << 20];
        std::thread::sleep(Duration::from_millis(20));
        let s = probe.stop();
        assert!(s.peak_bytes >= before + (16 << 20), "{} vs {}", s.peak_bytes, before);
        assert!(s.samples >= 2);
        drop(v);
    }
}
