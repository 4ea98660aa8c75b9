#![allow(dead_code)]

use std::path::Path;

pub const TOY: &str = "\
1 hi\thello
2 cheap thai please\tapi_call thai cheap
3 bangkok_city R_phone bangkok_city_phone
4 <SILENCE>\tbangkok_city is a thai place
5 thanks\tyou are welcome
";

pub const LEXICON: &str = "\
thai\tR_cuisine
cheap\tR_price
bangkok_city\tR_name
bangkok_city_phone\tR_phone
";

pub const KB: &str = "\
bangkok_city R_cuisine thai
bangkok_city R_price cheap
bangkok_city R_phone bangkok_city_phone
";

/// Settings under which a copy model reproduces the toy dialogue exactly.
pub const TOY_CONFIG: &str = "\
variant = \"copy\"
embedding_size = 12
hidden_size = 16
keep_prob = 1.0
learning_rate = 0.01
max_epochs = 300
patience = 0
target_accuracy = 1.0
max_response_len = 10
seed = 1
";

pub fn write_toy(dir: &Path) {
    std::fs::write(dir.join("toy.txt"), TOY).unwrap();
    std::fs::write(dir.join("lexicon.txt"), LEXICON).unwrap();
    std::fs::write(dir.join("kb.txt"), KB).unwrap();
    std::fs::write(dir.join("toy.toml"), TOY_CONFIG).unwrap();
}
