//! Maildir-style message churn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RoundedStream, Rounds};
use crate::error::{Error, Result};
use crate::simfs::FsOp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MailserverParams {
    pub n_users: u64,
    pub boxes_per_user: u64,
    pub init_msgs: u64,
    pub ops_per_cycle: u64,
    pub msg_max: u64,
    pub cycles: u64,
}

impl Default for MailserverParams {
    fn default() -> Self {
        MailserverParams {
            n_users: 2,
            boxes_per_user: 80,
            init_msgs: 1000,
            ops_per_cycle: 8000,
            msg_max: 32 * 1024,
            cycles: 100,
        }
    }
}

pub(crate) struct Mailserver {
    p: MailserverParams,
    rng: ChaCha8Rng,
    boxes: Vec<(String, Vec<String>)>,
    next_msg: u64,
    round: u64,
}

impl Mailserver {
    pub fn new(p: &MailserverParams, seed: u64) -> Result<Self> {
        if p.n_users == 0 || p.boxes_per_user == 0 || p.msg_max == 0 {
            return Err(Error::InvalidParameter(
                "mailserver needs users, mailboxes and msg_max > 0".into(),
            ));
        }
        Ok(Mailserver {
            p: p.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            boxes: Vec::new(),
            next_msg: 0,
            round: 0,
        })
    }

    fn deliver(&mut self, mbox: usize, out: &mut Vec<FsOp>) {
        let path = format!("{}/m{}", self.boxes[mbox].0, self.next_msg);
        self.next_msg += 1;
        let size = self.rng.gen_range(1..=self.p.msg_max);
        out.push(FsOp::Create(path.clone()));
        out.push(FsOp::Append(path.clone(), size));
        self.boxes[mbox].1.push(path);
    }

    fn init(&mut self, out: &mut Vec<FsOp>) {
        for u in 0..self.p.n_users {
            let user = format!("/u{u}");
            out.push(FsOp::Mkdir(user.clone()));
            for b in 0..self.p.boxes_per_user {
                let mbox = format!("{user}/b{b}");
                out.push(FsOp::Mkdir(mbox.clone()));
                self.boxes.push((mbox, Vec::new()));
                let idx = self.boxes.len() - 1;
                for _ in 0..self.p.init_msgs {
                    self.deliver(idx, out);
                }
                out.push(FsOp::Checkpoint);
            }
        }
    }

    /// Fair-coin insert (fsynced) or delete; a delete that draws an empty
    /// mailbox draws again.
    fn cycle(&mut self, out: &mut Vec<FsOp>) {
        let n = self.boxes.len();
        for _ in 0..self.p.ops_per_cycle {
            let insert = self.rng.gen_bool(0.5);
            if insert || self.boxes.iter().all(|(_, m)| m.is_empty()) {
                let mbox = self.rng.gen_range(0..n);
                self.deliver(mbox, out);
                out.push(FsOp::Checkpoint);
            } else {
                let mbox = loop {
                    let b = self.rng.gen_range(0..n);
                    if !self.boxes[b].1.is_empty() {
                        break b;
                    }
                };
                let msgs = &mut self.boxes[mbox].1;
                let victim = msgs.swap_remove(self.rng.gen_range(0..msgs.len()));
                out.push(FsOp::Delete(victim));
            }
        }
    }

    #[cfg(test)]
    pub fn message_count(&self) -> usize {
        self.boxes.iter().map(|(_, m)| m.len()).sum()
    }
}

impl Rounds for Mailserver {
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool {
        if self.round > self.p.cycles {
            return false;
        }
        if self.round == 0 {
            self.init(out);
        } else {
            self.cycle(out);
        }
        self.round += 1;
        true
    }
}

/// Mailboxes seeded with `init_msgs` messages each, then `cycles` rounds of
/// `ops_per_cycle` random deliveries and deletions.
pub fn gen_mailserver(p: &MailserverParams, seed: u64) -> Result<RoundedStream> {
    Ok(RoundedStream::by_round(Mailserver::new(p, seed)?))
}
