//! Round-trip a booking and a plan description through the source and
//! target phrase syntax.

use loadcast::catalog::RailcarCatalog;
use loadcast::instances::Booking;
use loadcast::language::Lexicon;
use loadcast::oracle::SolutionDescription;

fn main() {
    let lexicon = Lexicon::new(&RailcarCatalog::toy());
    println!("source vocabulary: {} tokens, target vocabulary: {} tokens", lexicon.source().len(), lexicon.target().len());

    let booking = Booking::new(vec![1, 2], vec![5, 3]);
    let source = lexicon.encode_input(&booking).unwrap();
    let line = lexicon.source().render(&source);
    println!("source phrase: {line}");
    let back = lexicon.decode_input(&lexicon.source().parse(&line).unwrap()).unwrap();
    assert_eq!(back, booking);

    let description = SolutionDescription::from_patterns([5, 1, 5]);
    let target = lexicon.encode_output(&description).unwrap();
    println!("target phrase: {}", lexicon.target().render(&target));
    assert_eq!(lexicon.decode_output(&target).unwrap(), description);

    let empty = lexicon.encode_output(&SolutionDescription::new()).unwrap();
    println!("empty plan:    {}", lexicon.target().render(&empty));

    for bad in ["EOS", "pat0_1 BLANK EOS", "pat0_1"] {
        let err = lexicon.target().parse(bad).and_then(|t| lexicon.decode_output(&t)).unwrap_err();
        println!("{bad:?} rejected: {err}");
    }
}
