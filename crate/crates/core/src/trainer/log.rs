use std::fmt::Write as _;

use super::objective::ObjectiveTerms;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Teacher,
    Student,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Teacher => "teacher",
            Phase::Student => "student",
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub phase: Phase,
    pub variant: String,
    pub epoch: usize,
    /// Batch means over the epoch.
    pub terms: ObjectiveTerms,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub wall_s: Option<f64>,
}

impl MetricsRecord {
    /// One JSON object; absent metrics are omitted.
    pub fn to_json_line(&self) -> String {
        let t = &self.terms;
        let mut s = format!(
            "{{\"phase\":\"{}\",\"variant\":\"{}\",\"epoch\":{},\"bpr\":{},\"id1\":{},\"id2\":{},\"reg\":{},\"total\":{}",
            self.phase.as_str(),
            self.variant,
            self.epoch,
            t.bpr,
            t.id1,
            t.id2,
            t.reg,
            t.total
        );
        if let Some(r) = self.recall {
            let _ = write!(s, ",\"recall@20\":{r}");
        }
        if let Some(n) = self.ndcg {
            let _ = write!(s, ",\"ndcg@20\":{n}");
        }
        if let Some(w) = self.wall_s {
            let _ = write!(s, ",\"wall_s\":{w:.3}");
        }
        s.push('}');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_shape() {
        let r = MetricsRecord {
            phase: Phase::Student,
            variant: "w/o ID2".into(),
            epoch: 3,
            terms: ObjectiveTerms {
                bpr: 0.5,
                id1: 0.25,
                id2: 0.0,
                reg: 0.125,
                total: 0.875,
            },
            recall: Some(0.5),
            ndcg: None,
            wall_s: None,
        };
        assert_eq!(
            r.to_json_line(),
            "{\"phase\":\"student\",\"variant\":\"w/o ID2\",\"epoch\":3,\"bpr\":0.5,\"id1\":0.25,\"id2\":0,\"reg\":0.125,\"total\":0.875,\"recall@20\":0.5}"
        );
    }
}
