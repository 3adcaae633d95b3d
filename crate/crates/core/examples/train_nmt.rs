//! Train the attention encoder-decoder on oracle-labeled toy data, save it,
//! reload it and predict with beam search.
//!
//!     cargo run --release --example train_nmt

use loadcast::catalog::RailcarCatalog;
use loadcast::checkpoint::Checkpoint;
use loadcast::instances::{generate, DataClass, DatasetSpec};
use loadcast::language::{Lexicon, Pair};
use loadcast::nmt::{Nmt, NmtDims};
use loadcast::oracle::SolverConfig;
use loadcast::training::{Objective, TrainConfig, Trainer};

fn main() {
    let catalog = RailcarCatalog::toy();
    let lexicon = Lexicon::new(&catalog);
    let labeled = generate(&DatasetSpec::new(DataClass::desk(), 3_000, 1), &catalog, &SolverConfig::default()).unwrap();
    let pairs: Vec<Pair> = labeled
        .iter()
        .map(|l| {
            let b = l.instance.booking.clone();
            Pair { source: lexicon.encode_input(&b).unwrap(), target: lexicon.encode_output(&l.description).unwrap(), booking: b }
        })
        .collect();
    let (train, rest) = pairs.split_at(2_400);
    let (valid, test) = rest.split_at(300);

    let model = Nmt::new(&lexicon, NmtDims { embed: 32, hidden: 64 }, 1, 0.1);
    let config = TrainConfig { max_epochs: 4, patience: 2, seed: 1, ..Default::default() };
    let outcome = Trainer::new(model, config).unwrap().run(train, valid, |r, _| {
        println!("{r}");
        Ok(())
    });
    let model = outcome.unwrap().model;

    let path = std::env::temp_dir().join("loadcast-example-nmt.ckpt");
    model.checkpoint().save(&path, false).unwrap();
    let model = Nmt::from_checkpoint(&Checkpoint::load(&path).unwrap(), &lexicon).unwrap();
    println!("saved and reloaded {}", path.display());

    for p in &test[..5] {
        let predicted = model.predict(&p.booking, 5).unwrap();
        println!("{}", p.booking);
        println!("  gold      {}", lexicon.target().render(&p.target));
        println!("  predicted {}", lexicon.target().render(&lexicon.encode_output(&predicted).unwrap()));
    }
}
