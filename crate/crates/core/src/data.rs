//! Match datasets and league tables.
//!
//! Input is a CSV of set scores with header
//! `home_team,away_team,home_sets,away_sets`. Teams are indexed in order of
//! first appearance. League tables rank by points, then by total
//! set-difference, then by team index.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = ["home_team", "away_team", "home_sets", "away_sets"];

/// A legal volleyball set-difference, home sets minus away sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct SetDiff(i8);

impl SetDiff {
    /// The support in category order: category k (1-based) is `ALL[k - 1]`.
    pub const ALL: [SetDiff; 6] = [
        SetDiff(-3),
        SetDiff(-2),
        SetDiff(-1),
        SetDiff(1),
        SetDiff(2),
        SetDiff(3),
    ];

    pub fn new(d: i64) -> Result<Self> {
        match d {
            -3..=-1 | 1..=3 => Ok(SetDiff(d as i8)),
            _ => Err(Error::InvalidSetDiff(d)),
        }
    }

    #[inline]
    pub fn get(self) -> i64 {
        self.0 as i64
    }

    /// Ordinal category in 1..=6, `y + 3 + 1[y <= 0]`.
    #[inline]
    pub fn category(self) -> usize {
        let y = self.0 as i64;
        (y + 3 + i64::from(y <= 0)) as usize
    }

    /// Zero-based position in [`SetDiff::ALL`].
    #[inline]
    pub fn index(self) -> usize {
        self.category() - 1
    }

    /// Inverse of [`SetDiff::category`]: `k - 3 - 1[k <= 3]`.
    pub fn from_category(k: usize) -> Result<Self> {
        if !(1..=6).contains(&k) {
            return Err(Error::InvalidArgument(format!("category {k} outside 1..=6")));
        }
        let k = k as i64;
        SetDiff::new(k - 3 - i64::from(k <= 3))
    }

    #[inline]
    pub fn negate(self) -> Self {
        SetDiff(-self.0)
    }

    #[inline]
    pub fn home_wins(self) -> bool {
        self.0 > 0
    }
}

impl TryFrom<i64> for SetDiff {
    type Error = Error;
    fn try_from(d: i64) -> Result<Self> {
        SetDiff::new(d)
    }
}

impl From<SetDiff> for i64 {
    fn from(d: SetDiff) -> i64 {
        d.get()
    }
}

impl std::fmt::Display for SetDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Team {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub home: usize,
    pub away: usize,
    pub set_diff: SetDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub teams: Vec<Team>,
    pub matches: Vec<MatchRecord>,
    /// Optional per-match train/test tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Partition>>,
}

impl Dataset {
    /// Builds a dataset from team names and matches, validating indices.
    pub fn new(names: Vec<String>, matches: Vec<MatchRecord>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if seen.insert(n.as_str(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate team name `{n}`")));
            }
        }
        let p = names.len();
        for m in &matches {
            if m.home >= p {
                return Err(Error::UnknownTeam(format!("index {}", m.home)));
            }
            if m.away >= p {
                return Err(Error::UnknownTeam(format!("index {}", m.away)));
            }
            if m.home == m.away {
                return Err(Error::InvalidArgument(format!("team {} plays itself", m.home)));
            }
        }
        let teams = names
            .into_iter()
            .enumerate()
            .map(|(index, name)| Team { index, name })
            .collect();
        Ok(Dataset {
            teams,
            matches,
            partition: None,
        })
    }

    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn n_matches(&self) -> usize {
        self.matches.len()
    }

    pub fn team_index(&self, name: &str) -> Result<usize> {
        self.teams
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.index)
            .ok_or_else(|| Error::UnknownTeam(name.to_string()))
    }

    pub fn team_names(&self) -> Vec<String> {
        self.teams.iter().map(|t| t.name.clone()).collect()
    }

    pub fn observed_diffs(&self) -> Vec<SetDiff> {
        self.matches.iter().map(|m| m.set_diff).collect()
    }

    pub fn schedule(&self) -> Vec<(usize, usize)> {
        self.matches.iter().map(|m| (m.home, m.away)).collect()
    }

    /// Same team registry, a subset of matches.
    pub fn with_matches(&self, matches: Vec<MatchRecord>) -> Dataset {
        Dataset {
            teams: self.teams.clone(),
            matches,
            partition: None,
        }
    }

    /// Matches tagged with the given partition. Untagged datasets yield all
    /// matches for `Train` and none for `Test`.
    pub fn partition_subset(&self, part: Partition) -> Dataset {
        let matches = match &self.partition {
            None if part == Partition::Train => self.matches.clone(),
            None => Vec::new(),
            Some(tags) => self
                .matches
                .iter()
                .zip(tags)
                .filter(|(_, t)| **t == part)
                .map(|(m, _)| *m)
                .collect(),
        };
        self.with_matches(matches)
    }

    /// Writes the dataset back out in the input CSV format, using 3-x set
    /// scores for the winner.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(HEADER)?;
        for m in &self.matches {
            let (hs, as_) = set_score(m.set_diff);
            wtr.write_record([
                self.teams[m.home].name.as_str(),
                self.teams[m.away].name.as_str(),
                &hs.to_string(),
                &as_.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// The unique set score producing a set-difference.
pub fn set_score(d: SetDiff) -> (u32, u32) {
    let v = d.get();
    if v > 0 {
        (3, (3 - v) as u32)
    } else {
        ((3 + v) as u32, 3)
    }
}

fn legal_score(home: u32, away: u32) -> bool {
    (home == 3 && away <= 2) || (away == 3 && home <= 2)
}

/// Parses a match CSV.
pub fn load_dataset<R: Read>(source: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::EmptyDataset),
    };
    let fields: Vec<&str> = header.iter().collect();
    for (i, f) in fields.iter().enumerate() {
        if fields[..i].contains(f) {
            return Err(Error::DuplicateHeader(format!("column `{f}` repeated")));
        }
    }
    if fields != HEADER {
        return Err(Error::BadHeader(fields.join(",")));
    }

    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut matches = Vec::new();
    let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(name) {
            return i;
        }
        let i = names.len();
        names.push(name.to_string());
        index.insert(name.to_string(), i);
        i
    };

    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(Error::MalformedRow {
                line,
                msg: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        if rec.iter().eq(HEADER.iter().copied()) {
            return Err(Error::DuplicateHeader(format!("header repeated at line {line}")));
        }
        let (home, away) = (&rec[0], &rec[1]);
        if home.is_empty() || away.is_empty() {
            return Err(Error::MalformedRow {
                line,
                msg: "empty team name".into(),
            });
        }
        let parse = |s: &str| {
            s.parse::<u32>().map_err(|_| Error::MalformedRow {
                line,
                msg: format!("`{s}` is not a set count"),
            })
        };
        let hs = parse(&rec[2])?;
        let as_ = parse(&rec[3])?;
        if home == away {
            return Err(Error::SelfMatch {
                line,
                team: home.to_string(),
            });
        }
        if !legal_score(hs, as_) {
            return Err(Error::IllegalScore {
                line,
                home: hs,
                away: as_,
            });
        }
        let h = intern(home, &mut names);
        let a = intern(away, &mut names);
        matches.push(MatchRecord {
            home: h,
            away: a,
            set_diff: SetDiff::new(hs as i64 - as_ as i64)?,
        });
    }
    Dataset::new(names, matches)
}

/// League points `(home, away)` earned from a set-difference: 3 for a win
/// by two or three sets, 2/1 split for a 3-2 result.
pub fn points_from_diff(d: SetDiff) -> (u32, u32) {
    match d.get() {
        3 | 2 => (3, 0),
        1 => (2, 1),
        -1 => (1, 2),
        _ => (0, 3),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeagueRow {
    pub team: usize,
    pub points: i64,
    pub total_set_diff: i64,
    /// 1-based.
    pub rank: usize,
}

/// Per-team standings, indexed by team.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeagueTable {
    pub rows: Vec<LeagueRow>,
}

impl LeagueTable {
    pub fn points(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.points).collect()
    }

    pub fn set_diffs(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.total_set_diff).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.rank).collect()
    }

    /// Team indices from first to last place.
    pub fn standings(&self) -> Vec<usize> {
        let mut order = vec![0; self.rows.len()];
        for r in &self.rows {
            order[r.rank - 1] = r.team;
        }
        order
    }

    /// CSV `team,points,set_diff,rank`, rows in standing order.
    pub fn write_csv<W: Write>(&self, w: W, teams: &[Team]) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["team", "points", "set_diff", "rank"])?;
        for idx in self.standings() {
            let r = &self.rows[idx];
            wtr.write_record([
                teams[r.team].name.clone(),
                r.points.to_string(),
                r.total_set_diff.to_string(),
                r.rank.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self, teams: &[Team]) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            team: &'a str,
            points: i64,
            set_diff: i64,
            rank: usize,
        }
        let rows: Vec<Row> = self
            .standings()
            .into_iter()
            .map(|i| {
                let r = &self.rows[i];
                Row {
                    team: &teams[r.team].name,
                    points: r.points,
                    set_diff: r.total_set_diff,
                    rank: r.rank,
                }
            })
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }
}

/// Ranks (1-based) by points descending, then set-difference descending,
/// then team index ascending.
pub fn rank_teams(points: &[i64], set_diffs: &[i64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .cmp(&points[a])
            .then(set_diffs[b].cmp(&set_diffs[a]))
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0; points.len()];
    for (pos, team) in order.into_iter().enumerate() {
        ranks[team] = pos + 1;
    }
    ranks
}

/// Accumulates points and set-differences over a schedule and ranks teams.
pub fn table_from_outcomes(
    n_teams: usize,
    schedule: &[(usize, usize)],
    outcomes: &[SetDiff],
) -> Result<LeagueTable> {
    if schedule.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            expected: schedule.len(),
            got: outcomes.len(),
        });
    }
    let mut points = vec![0i64; n_teams];
    let mut sd = vec![0i64; n_teams];
    for (&(h, a), &d) in schedule.iter().zip(outcomes) {
        let (ph, pa) = points_from_diff(d);
        points[h] += ph as i64;
        points[a] += pa as i64;
        sd[h] += d.get();
        sd[a] -= d.get();
    }
    let ranks = rank_teams(&points, &sd);
    let rows = (0..n_teams)
        .map(|t| LeagueRow {
            team: t,
            points: points[t],
            total_set_diff: sd[t],
            rank: ranks[t],
        })
        .collect();
    Ok(LeagueTable { rows })
}

pub fn build_league_table(dataset: &Dataset, outcomes: &[SetDiff]) -> Result<LeagueTable> {
    table_from_outcomes(dataset.n_teams(), &dataset.schedule(), outcomes)
}

/// The observed final table.
pub fn observed_table(dataset: &Dataset) -> LeagueTable {
    build_league_table(dataset, &dataset.observed_diffs()).expect("observed diffs align with schedule")
}

/// Every ordered pair of distinct teams once: each team hosts every other.
pub fn double_round_robin(n_teams: usize) -> Vec<(usize, usize)> {
    let mut s = Vec::with_capacity(n_teams * n_teams.saturating_sub(1));
    for h in 0..n_teams {
        for a in 0..n_teams {
            if h != a {
                s.push((h, a));
            }
        }
    }
    s
}
