//! Classification tasks and their option lists.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::raster::DatasetKind;

// Option lines exactly as they appear in the prompts, trailing spaces included.
const BIGEARTHNET43_LINES: &str = include_str!("../data/classes/bigearthnet43.txt");
const BIGEARTHNET19_LINES: &str = include_str!("../data/classes/bigearthnet19.txt");
const EUROSAT10_LINES: &str = include_str!("../data/classes/eurosat10.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    BigEarthNet43,
    BigEarthNet19,
    EuroSat10,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::BigEarthNet43, Task::BigEarthNet19, Task::EuroSat10];

    pub fn dataset(self) -> DatasetKind {
        match self {
            Task::BigEarthNet43 | Task::BigEarthNet19 => DatasetKind::BigEarthNet,
            Task::EuroSat10 => DatasetKind::EuroSat,
        }
    }

    pub fn multi_label(self) -> bool {
        !matches!(self, Task::EuroSat10)
    }

    /// Raw option lines used when rendering the class block of a prompt.
    pub fn option_lines(self) -> Vec<&'static str> {
        let raw = match self {
            Task::BigEarthNet43 => BIGEARTHNET43_LINES,
            Task::BigEarthNet19 => BIGEARTHNET19_LINES,
            Task::EuroSat10 => EUROSAT10_LINES,
        };
        raw.lines().collect()
    }

    /// Class names, index 0 is class 1.
    pub fn class_names(self) -> Vec<&'static str> {
        self.option_lines().into_iter().map(str::trim_end).collect()
    }

    pub fn n_classes(self) -> usize {
        self.option_lines().len()
    }

    /// 1-based index of an exact class name.
    pub fn class_index(self, name: &str) -> Option<u32> {
        self.class_names()
            .iter()
            .position(|n| *n == name)
            .map(|i| i as u32 + 1)
    }

    pub fn spec(self) -> TaskSpec {
        TaskSpec {
            task: self,
            class_names: self.class_names().into_iter().map(String::from).collect(),
            multi_label: self.multi_label(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::BigEarthNet43 => "bigearthnet43",
            Task::BigEarthNet19 => "bigearthnet19",
            Task::EuroSat10 => "eurosat10",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "bigearthnet43" | "ben43" | "43" => Ok(Task::BigEarthNet43),
            "bigearthnet19" | "ben19" | "19" => Ok(Task::BigEarthNet19),
            "eurosat10" | "eurosat" => Ok(Task::EuroSat10),
            _ => Err(format!("unknown task `{s}` (expected bigearthnet43, bigearthnet19 or eurosat10)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub class_names: Vec<String>,
    pub multi_label: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts() {
        assert_eq!(Task::BigEarthNet43.n_classes(), 43);
        assert_eq!(Task::BigEarthNet19.n_classes(), 19);
        assert_eq!(Task::EuroSat10.n_classes(), 10);
        assert!(Task::BigEarthNet43.multi_label());
        assert!(Task::BigEarthNet19.multi_label());
        assert!(!Task::EuroSat10.multi_label());
    }

    #[test]
    fn names_resolve() {
        assert_eq!(Task::BigEarthNet43.class_index("Sea and ocean"), Some(37));
        assert_eq!(Task::BigEarthNet43.class_index("Agro-forestry areas"), Some(1));
        assert_eq!(Task::BigEarthNet43.class_index("Transitional woodland/shrub"), Some(40));
        assert_eq!(Task::EuroSat10.class_index("River"), Some(9));
        assert_eq!(Task::EuroSat10.class_index("Forest"), Some(2));
        assert_eq!(Task::EuroSat10.class_index("forest"), None);
        assert_eq!(Task::BigEarthNet19.class_index("Urban fabric"), Some(19));
    }

    #[test]
    fn names_are_trimmed_but_lines_are_not() {
        assert_eq!(Task::BigEarthNet43.option_lines()[0], "Agro-forestry areas ");
        assert_eq!(Task::BigEarthNet43.class_names()[0], "Agro-forestry areas");
    }
}
