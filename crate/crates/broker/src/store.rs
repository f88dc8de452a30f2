//! Append-only JSON-lines log of everything that must survive a restart.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sempubsub_core::{Notification, Subscription};

use crate::client::ClientRecord;

pub const LOG_FILE: &str = "broker.jsonl";

/// A notification that could not be delivered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub notification: Notification,
    pub target: String,
    pub attempts: u32,
    pub error: String,
    /// Milliseconds since the Unix epoch.
    pub failed_at: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub(crate) enum Record {
    Client { client: ClientRecord },
    Subscribe { client_id: String, subscription: Subscription },
    Unsubscribe { sub_id: String },
    /// `queued` notifications stay pending until a `Drain` covers their seq.
    Notify { seq: u64, client_id: String, queued: bool, notification: Notification },
    Drain { client_id: String, upto: u64 },
    DeadLetter { letter: DeadLetter },
}

pub(crate) struct EventLog {
    path: PathBuf,
    out: BufWriter<File>,
}

pub(crate) struct Recovered {
    pub records: Vec<Record>,
    pub corrupt: u64,
}

impl EventLog {
    /// Opens (creating if needed) the log in `dir` and reads back every
    /// well-formed record. Lines that fail to parse are skipped and counted.
    pub fn open(dir: &Path) -> io::Result<(EventLog, Recovered)> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let mut text = Vec::new();
        file.read_to_end(&mut text)?;

        let mut records = Vec::new();
        let mut corrupt = 0;
        for (n, line) in text.split(|b| *b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            match serde_json::from_slice::<Record>(line) {
                Ok(r) => records.push(r),
                Err(e) => {
                    corrupt += 1;
                    log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), n + 1);
                }
            }
        }

        // A torn final write must not swallow the next record.
        if text.last().is_some_and(|b| *b != b'\n') {
            file.seek(SeekFrom::End(0))?;
            file.write_all(b"\n")?;
        }
        Ok((EventLog { path, out: BufWriter::new(file) }, Recovered { records, corrupt }))
    }

    pub fn append(&mut self, record: &Record) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
