//! Semantic class set with group assignment and frequency priors.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};

pub type ClassId = u16;

/// Reserved label for empty / unlabeled.
pub const EMPTY: ClassId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassGroup {
    /// Densified per object by silhouette carving.
    Instance,
    /// Surface-reconstructed.
    Ground,
    /// Voxelized directly.
    Other,
}

impl ClassGroup {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "instance" | "inst" => Some(Self::Instance),
            "ground" | "gnd" => Some(Self::Ground),
            "other" | "others" | "oth" => Some(Self::Other),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Instance => "instance",
            Self::Ground => "ground",
            Self::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: String,
    pub group: Option<ClassGroup>,
    /// Relative frequency in percent.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    classes: Vec<ClassInfo>,
}

/// Class table of the aerial dataset: (name, group, frequency %).
const AERIAL_CLASSES: [(&str, ClassGroup, f64); 22] = [
    ("building", ClassGroup::Instance, 75.7457),
    ("roof", ClassGroup::Instance, 1.7417),
    ("vehicle", ClassGroup::Instance, 0.5195),
    ("crane", ClassGroup::Instance, 0.0052),
    ("bicycle", ClassGroup::Instance, 0.0046),
    ("person", ClassGroup::Instance, 0.0002),
    ("flying_animal", ClassGroup::Instance, 0.0001),
    ("truck", ClassGroup::Instance, 0.1067),
    ("grass", ClassGroup::Ground, 4.1978),
    ("vegetation", ClassGroup::Ground, 2.3234),
    ("water", ClassGroup::Ground, 1.1322),
    ("walkway", ClassGroup::Ground, 1.0560),
    ("dirt", ClassGroup::Ground, 1.2102),
    ("road", ClassGroup::Ground, 0.9377),
    ("gravel", ClassGroup::Ground, 0.7960),
    ("parking_lot", ClassGroup::Ground, 1.4349),
    ("tree", ClassGroup::Other, 6.8357),
    ("ground_obstacle", ClassGroup::Other, 1.7566),
    ("construction", ClassGroup::Other, 0.1689),
    ("cable_tower", ClassGroup::Other, 0.0040),
    ("rock", ClassGroup::Other, 0.0210),
    ("cable", ClassGroup::Other, 0.0017),
];

impl Default for Taxonomy {
    fn default() -> Self {
        Self::aerial()
    }
}

impl Taxonomy {
    /// Validate ids: unique and contiguous from 1; frequencies non-negative.
    pub fn new(mut classes: Vec<ClassInfo>) -> Result<Self> {
        classes.sort_by_key(|c| c.id);
        for (pos, c) in classes.iter().enumerate() {
            if c.id as usize != pos + 1 {
                return Err(Error::Config(format!(
                    "class ids must be unique and contiguous from 1 (found {} at position {})",
                    c.id,
                    pos + 1
                )));
            }
            if !(c.frequency >= 0.0) {
                return Err(Error::Config(format!("class {} has negative frequency", c.name)));
            }
        }
        if classes.is_empty() {
            return Err(Error::Config("taxonomy is empty".into()));
        }
        Ok(Self { classes })
    }

    /// The 22-class aerial taxonomy with its frequency priors and group table.
    pub fn aerial() -> Self {
        let classes = AERIAL_CLASSES
            .iter()
            .enumerate()
            .map(|(i, (name, group, freq))| ClassInfo {
                id: i as ClassId + 1,
                name: (*name).to_string(),
                group: Some(*group),
                frequency: *freq,
            })
            .collect();
        Self { classes }
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, id: ClassId) -> bool {
        id >= 1 && (id as usize) <= self.classes.len()
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassInfo> {
        if self.contains(id) {
            Some(&self.classes[id as usize - 1])
        } else {
            None
        }
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        let name = name.trim().to_ascii_lowercase().replace(' ', "_");
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn frequency(&self, id: ClassId) -> f64 {
        self.get(id).map_or(0.0, |c| c.frequency)
    }

    pub fn group(&self, id: ClassId) -> Result<ClassGroup> {
        self.get(id).and_then(|c| c.group).ok_or(Error::UnassignedClass(id))
    }

    /// Priority order used to break ties: the more frequent class first, then the lower id.
    /// `Ordering::Greater` means `a` wins.
    pub fn prior_cmp(&self, a: ClassId, b: ClassId) -> Ordering {
        self.frequency(a)
            .partial_cmp(&self.frequency(b))
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.cmp(&a))
    }

    /// Winner among `(class, score)` candidates: highest score, ties by [`Self::prior_cmp`].
    pub fn pick<S: PartialOrd + Copy>(&self, candidates: impl IntoIterator<Item = (ClassId, S)>) -> Option<ClassId> {
        let mut best: Option<(ClassId, S)> = None;
        for (c, s) in candidates {
            best = match best {
                None => Some((c, s)),
                Some((bc, bs)) => {
                    let ord = s.partial_cmp(&bs).unwrap_or(Ordering::Equal).then_with(|| self.prior_cmp(c, bc));
                    if ord == Ordering::Greater {
                        Some((c, s))
                    } else {
                        Some((bc, bs))
                    }
                }
            };
        }
        best.map(|(c, _)| c)
    }

    /// Parse a taxonomy table: one `id,name,group,frequency` row per line,
    /// `#` comments and an optional header row allowed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut classes = Vec::new();
        let mut seen = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Config(format!("taxonomy line {}: expected 4 fields", lineno + 1)));
            }
            if fields[0].eq_ignore_ascii_case("id") {
                continue;
            }
            let id: ClassId = fields[0]
                .parse()
                .map_err(|_| Error::Config(format!("taxonomy line {}: bad id", lineno + 1)))?;
            if seen.insert(id, ()).is_some() {
                return Err(Error::Config(format!("duplicate class id {id}")));
            }
            let group = if fields[2].is_empty() || fields[2] == "-" {
                None
            } else {
                Some(ClassGroup::parse(fields[2]).ok_or_else(|| {
                    Error::Config(format!("taxonomy line {}: unknown group {}", lineno + 1, fields[2]))
                })?)
            };
            let frequency: f64 = fields[3]
                .parse()
                .map_err(|_| Error::Config(format!("taxonomy line {}: bad frequency", lineno + 1)))?;
            classes.push(ClassInfo { id, name: fields[1].to_string(), group, frequency });
        }
        Self::new(classes)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("id,name,group,frequency_pct\n");
        for c in &self.classes {
            let g = c.group.map_or("-", |g| g.name());
            out.push_str(&format!("{},{},{},{}\n", c.id, c.name, g, c.frequency));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aerial_table_shape() {
        let t = Taxonomy::aerial();
        assert_eq!(t.len(), 22);
        assert_eq!(t.group(t.id_of("Building").unwrap()).unwrap(), ClassGroup::Instance);
        assert_eq!(t.group(t.id_of("road").unwrap()).unwrap(), ClassGroup::Ground);
        assert_eq!(t.group(t.id_of("tree").unwrap()).unwrap(), ClassGroup::Other);
        assert_eq!(t.frequency(t.id_of("grass").unwrap()), 4.1978);
        assert_eq!(t.frequency(t.id_of("road").unwrap()), 0.9377);
        assert!(t.group(40).is_err());
    }

    #[test]
    fn prior_prefers_frequent_then_lower_id() {
        let t = Taxonomy::aerial();
        let grass = t.id_of("grass").unwrap();
        let road = t.id_of("road").unwrap();
        assert_eq!(t.pick([(road, 2u32), (grass, 2)]), Some(grass));
        assert_eq!(t.pick([(grass, 2u32), (road, 2)]), Some(grass));
        assert_eq!(t.pick([(road, 3u32), (grass, 2)]), Some(road));
        let flat = Taxonomy::parse("1,a,other,1.0\n2,b,other,1.0\n").unwrap();
        assert_eq!(flat.pick([(2, 1u32), (1, 1)]), Some(1));
        assert_eq!(t.pick(std::iter::empty::<(ClassId, u32)>()), None);
    }

    #[test]
    fn text_round_trip() {
        let t = Taxonomy::aerial();
        assert_eq!(Taxonomy::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn rejects_gaps_and_duplicates() {
        assert!(Taxonomy::parse("1,a,other,1\n3,b,other,1\n").is_err());
        assert!(Taxonomy::parse("1,a,other,1\n1,b,other,1\n").is_err());
        assert!(Taxonomy::parse("1,a,bogus,1\n").is_err());
        assert!(Taxonomy::parse("1,a,other,-1\n").is_err());
    }
}
