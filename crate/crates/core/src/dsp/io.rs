use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::DspError;

/// One row of the offline analysis format `time_s,channel,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    pub time_s: f64,
    pub channel: String,
    pub value: f64,
}

pub fn write_samples_csv<W: Write>(out: W, samples: &[ChannelSample]) -> Result<(), DspError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<ChannelSample>, DspError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["time_s", "channel", "value"] {
        return Err(DspError::Format(format!("expected header time_s,channel,value, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    r.deserialize().map(|row| row.map_err(DspError::from)).collect()
}

/// Samples of one channel as `(times, values)`.
pub fn channel(samples: &[ChannelSample], name: &str) -> (Vec<f64>, Vec<f64>) {
    samples.iter().filter(|s| s.channel == name).map(|s| (s.time_s, s.value)).unzip()
}

pub const REPORT_VERSION: u32 = 1;

/// Named scalar results of one characterisation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            version: REPORT_VERSION,
            name: name.into(),
            metrics: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> Result<String, DspError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DspError> {
        let r: Self = serde_json::from_str(text)?;
        if r.version != REPORT_VERSION {
            return Err(DspError::Format(format!("unsupported report version {}", r.version)));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ChannelSample { time_s: 0.0, channel: "prox".into(), value: 1610.0 },
            ChannelSample { time_s: 0.1, channel: "p3_5".into(), value: 8.1 },
        ];
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("time_s,channel,value\n"));
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), rows);
        assert_eq!(channel(&rows, "prox"), (vec![0.0], vec![1610.0]));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_samples_csv("t,ch,v\n0,a,1\n".as_bytes()).is_err());
    }

    #[test]
    fn report_round_trip() {
        let r = MetricReport::new("step").with("delay_time", 0.0048);
        let back = MetricReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let future = r.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(MetricReport::from_json(&future).is_err());
    }
}
