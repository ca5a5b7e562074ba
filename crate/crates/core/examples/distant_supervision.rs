//! Annotate transactions with concept labels from the rules they triggered.
//!
//!     cargo run --example distant_supervision

use cbx::weak_labels::{annotate, load_rule_map, load_taxonomy, UnknownRulePolicy};

fn main() -> cbx::Result<()> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let taxonomy = load_taxonomy(format!("{data}/taxonomy.txt"))?;
    let rules = load_rule_map(format!("{data}/example.rules"), &taxonomy)?;
    for (id, entry) in rules.iter() {
        let names: Vec<&str> = entry.concepts.iter().map(|&c| taxonomy.names()[c].as_str()).collect();
        println!("{id:<22} {:<42} -> {}", entry.description, names.join(", "));
    }

    let transactions: [&[&str]; 4] = [
        &["risky_product_styles"],
        &["risky_product_styles", "n_cards_last_week"],
        &[],
        &["n_cards_last_week", "retired_rule_17"],
    ];
    for triggered in transactions {
        let a = annotate(triggered, &rules, &taxonomy, UnknownRulePolicy::Skip)?;
        println!(
            "{triggered:?} -> {:?}{}",
            taxonomy.names_of(&a.concepts),
            if a.unknown_rules > 0 { format!(" ({} unknown rule skipped)", a.unknown_rules) } else { String::new() }
        );
    }
    let strict = annotate(["retired_rule_17"], &rules, &taxonomy, UnknownRulePolicy::Strict);
    println!("strict mode: {}", strict.unwrap_err());
    Ok(())
}
