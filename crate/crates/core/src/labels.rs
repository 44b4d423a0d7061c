//! Closed label vocabularies of the four scene classification tasks.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Error returned when a label name is not part of a task vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownLabel {
    pub task: Task,
    pub name: alloc::string::String,
}

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown {} label {:?}", self.task, self.name)
    }
}

impl core::error::Error for UnknownLabel {}

macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident, $task:expr, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const NAMES: &'static [&'static str] = &[$($text),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }

            pub fn name(self) -> &'static str {
                Self::NAMES[self.index()]
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::NAMES
                    .iter()
                    .position(|n| *n == s)
                    .map(|i| Self::ALL[i])
                    .ok_or_else(|| UnknownLabel { task: $task, name: s.into() })
            }
        }
    };
}

vocabulary!(
    /// Temporal crash label of a frame relative to the moment of impact.
    CrashLikelihood, Task::CrashLikelihood, {
        NoCrash => "no_crash",
        PreCrash => "pre_crash",
        Crash => "crash",
    }
);

vocabulary!(
    /// US functional road classification.
    RoadFunction, Task::RoadFunction, {
        Arterial => "arterial",
        Collector => "collector",
        Interstate => "interstate",
        Local => "local",
    }
);

vocabulary!(Weather, Task::Weather, {
    Clear => "clear",
    Foggy => "foggy",
    Overcast => "overcast",
    Rainy => "rainy",
    Snowy => "snowy",
});

vocabulary!(TimeOfDay, Task::TimeOfDay, {
    DawnDusk => "dawn_dusk",
    Daytime => "daytime",
    Night => "night",
});

/// One of the four classification tasks, in the fixed branch order
/// (crash, road, weather, time) used by every API and file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CrashLikelihood,
    RoadFunction,
    Weather,
    TimeOfDay,
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::CrashLikelihood,
        Task::RoadFunction,
        Task::Weather,
        Task::TimeOfDay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::CrashLikelihood => "crash_likelihood",
            Task::RoadFunction => "road_function",
            Task::Weather => "weather",
            Task::TimeOfDay => "time_of_day",
        }
    }

    /// Human-readable classifier name as used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Task::CrashLikelihood => "Crash",
            Task::RoadFunction => "Road function",
            Task::Weather => "Weather",
            Task::TimeOfDay => "Time of day",
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::CrashLikelihood => CrashLikelihood::NAMES,
            Task::RoadFunction => RoadFunction::NAMES,
            Task::Weather => Weather::NAMES,
            Task::TimeOfDay => TimeOfDay::NAMES,
        }
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| UnknownLabel {
                task: Task::CrashLikelihood,
                name: s.into(),
            })
    }
}

/// The four labels produced for every classified scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneLabels {
    pub crash_likelihood: CrashLikelihood,
    pub road_function: RoadFunction,
    pub weather: Weather,
    pub time_of_day: TimeOfDay,
}

impl SceneLabels {
    /// Class indices in branch order.
    pub fn indices(&self) -> [usize; 4] {
        [
            self.crash_likelihood.index(),
            self.road_function.index(),
            self.weather.index(),
            self.time_of_day.index(),
        ]
    }

    /// Builds labels from class indices in branch order.
    pub fn from_indices(indices: [usize; 4]) -> Option<Self> {
        Some(SceneLabels {
            crash_likelihood: CrashLikelihood::from_index(indices[0])?,
            road_function: RoadFunction::from_index(indices[1])?,
            weather: Weather::from_index(indices[2])?,
            time_of_day: TimeOfDay::from_index(indices[3])?,
        })
    }
}
