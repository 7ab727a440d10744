use super::{CommError, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Send { peer: usize, tag: u32, bytes: usize },
    Recv { peer: usize, tag: u32, bytes: usize },
}

/// Wraps a transport and records every successful send and receive.
pub struct Instrumented<T> {
    inner: T,
    trace: Vec<TraceEvent>,
}

impl<T: Transport> Instrumented<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            trace: Vec::new(),
        }
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn clear(&mut self) {
        self.trace.clear();
    }

    pub fn sends(&self) -> usize {
        self.trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::Send { .. }))
            .count()
    }

    pub fn bytes_sent(&self) -> usize {
        self.trace
            .iter()
            .map(|e| match *e {
                TraceEvent::Send { bytes, .. } => bytes,
                TraceEvent::Recv { .. } => 0,
            })
            .sum()
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for Instrumented<T> {
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn size(&self) -> usize {
        self.inner.size()
    }

    fn send(&mut self, peer: usize, tag: u32, payload: &[u8]) -> Result<(), CommError> {
        self.inner.send(peer, tag, payload)?;
        self.trace.push(TraceEvent::Send {
            peer,
            tag,
            bytes: payload.len(),
        });
        Ok(())
    }

    fn recv(&mut self, peer: usize, tag: u32) -> Result<Vec<u8>, CommError> {
        let data = self.inner.recv(peer, tag)?;
        self.trace.push(TraceEvent::Recv {
            peer,
            tag,
            bytes: data.len(),
        });
        Ok(data)
    }

    fn virtual_time(&self) -> Option<f64> {
        self.inner.virtual_time()
    }

    fn advance(&mut self, secs: f64) {
        self.inner.advance(secs)
    }
}
