//! Bundled lookup tables: object aliases, vague-task expansions and the
//! typical-room table behind the commonsense baseline.

use indexmap::IndexMap;

const COMMONSENSE: &str = include_str!("../../assets/commonsense.json");

/// Alternative phrasings per object label (at most three each). The label
/// itself, with underscores read as spaces, always matches too.
pub const SYNONYMS: &[(&str, &[&str])] = &[
    ("water_bottle", &["water bottle", "bottle of water", "drinking bottle"]),
    ("bag", &["backpack", "rucksack", "knapsack"]),
    ("body_sponge", &["sponge", "bath sponge"]),
    ("fruits_juice", &["fruit juice", "juice"]),
    ("tooth_paste", &["toothpaste"]),
    ("treatments", &["medicine", "medication", "first aid kit"]),
    ("chips_bag", &["chips", "crisps", "bag of chips"]),
    ("cracker_box", &["crackers", "box of crackers"]),
    ("snacks", &["snack"]),
    ("bath_slipper", &["slippers", "bath slippers"]),
    ("pitcher_base", &["pitcher", "jug"]),
    ("muscat", &["grapes"]),
    ("car_toy", &["toy car"]),
    ("truck_toy", &["toy truck"]),
    ("airplane_toy", &["toy airplane", "toy plane"]),
    ("penguin_doll", &["penguin"]),
    ("sheep_doll", &["sheep"]),
    ("pig_doll", &["pig"]),
    ("cup", &["mug"]),
    ("pudding_box", &["pudding"]),
];

/// Keyword → items a vague request usually needs. Items are free text and
/// go through alias anchoring like any model reply.
pub const INTENTS: &[(&[&str], &[&str])] = &[
    (&["field trip", "excursion", "outing", "hike"], &["water bottle", "backpack"]),
    (&["smoothie"], &["apple", "banana"]),
    (&["thirsty", "something to drink"], &["fruit juice", "water bottle"]),
    (&["snack time", "hungry"], &["snacks", "crackers", "chips"]),
    (&["bath"], &["sponge", "towel", "slippers"]),
    (&["tidy the toys", "play time", "playtime"], &["toy car", "toy truck", "toy airplane"]),
    (&["not feeling well", "feel sick", "headache"], &["medicine", "water bottle"]),
];

/// Aliases for `label`, from [`SYNONYMS`].
pub fn aliases(label: &str) -> &'static [&'static str] {
    SYNONYMS.iter().find(|(l, _)| *l == label).map(|(_, a)| *a).unwrap_or(&[])
}

/// Typical room per object for a bundled environment, as a chat model
/// answering from general knowledge would place them.
pub fn commonsense_rooms(env_name: &str) -> Option<IndexMap<String, String>> {
    let mut all: IndexMap<String, IndexMap<String, String>> =
        serde_json::from_str(COMMONSENSE).expect("bundled commonsense table parses");
    all.shift_remove(env_name)
}
