//! Projects leaf labels into each of the four label spaces.

use srrg::taxonomy::{LabelSet, LabelSpace, Status, Taxonomy};

fn main() {
    let tax = Taxonomy::bundled();
    println!("{} leaves, {} upper classes", tax.leaves().len(), tax.uppers().len());

    let labels: LabelSet = [
        ("Simple pleural effusion", Status::Present),
        ("Loculated pleural effusion", Status::Uncertain),
        ("Perihilar airspace opacity", Status::Absent),
    ]
    .into_iter()
    .collect();

    for space in LabelSpace::ALL {
        let classes = tax.project(&labels, space).expect("labels are leaves");
        let names: Vec<String> = classes.iter().map(ToString::to_string).collect();
        println!("{:<14} {} of {} classes: {}", space.as_str(), names.len(), tax.class_universe(space).len(), names.join(", "));
    }
}
