//! Expand pairs into next-loading classification examples and train the
//! feedforward baseline on them.

use loadcast::baseline::{expanded_to_text, transform_dataset, Baseline, BaselineDims};
use loadcast::catalog::RailcarCatalog;
use loadcast::instances::{generate, DataClass, DatasetSpec};
use loadcast::language::{Lexicon, Pair};
use loadcast::oracle::SolverConfig;
use loadcast::training::{TrainConfig, Trainer};

fn main() {
    let catalog = RailcarCatalog::toy();
    let lexicon = Lexicon::new(&catalog);
    let labeled = generate(&DatasetSpec::new(DataClass::desk(), 3_000, 2), &catalog, &SolverConfig::default()).unwrap();
    let pairs: Vec<Pair> = labeled
        .iter()
        .map(|l| {
            let b = l.instance.booking.clone();
            Pair { source: lexicon.encode_input(&b).unwrap(), target: lexicon.encode_output(&l.description).unwrap(), booking: b }
        })
        .collect();
    let (train, valid) = pairs.split_at(2_500);
    let train_x = transform_dataset(train, &lexicon).unwrap();
    let valid_x = transform_dataset(valid, &lexicon).unwrap();
    println!("{} pairs expand to {} examples; first three:", train.len(), train_x.len());
    print!("{}", expanded_to_text(&train_x[..3], &lexicon));

    let model = Baseline::new(&lexicon, &BaselineDims { hidden: vec![128, 128] }, 2, 1.0);
    let config = TrainConfig { max_epochs: 6, patience: 2, seed: 2, ..Default::default() };
    let model = Trainer::new(model, config)
        .unwrap()
        .run(&train_x, &valid_x, |r, _| {
            println!("{r}");
            Ok(())
        })
        .unwrap()
        .model;
    for p in &valid[..5] {
        let d = model.generate(&p.booking, 5).unwrap();
        println!("{} -> {}", p.booking, lexicon.target().render(&lexicon.encode_output(&d).unwrap()));
    }
}
