use copydial::corpus::{encode_corpus, parse_dialogue_file, serialize_dialogues, synthesize_split, KbSpec};
use copydial::eval::evaluate_model;
use copydial::train::{train_model, TrainOptions};
use copydial::{Checkpoint, EntityLexicon, Error, TrainConfig, Variant, Vocabulary};

#[test]
fn files_to_checkpoint_to_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let split = synthesize_split(&KbSpec::desk_default(), 4, 2, 11).unwrap();
    let train_path = dir.path().join("train.txt");
    let test_path = dir.path().join("test.txt");
    let lex_path = dir.path().join("lexicon.txt");
    std::fs::write(&train_path, serialize_dialogues(&split.train.dialogues)).unwrap();
    std::fs::write(&test_path, serialize_dialogues(&split.heldout.dialogues)).unwrap();
    std::fs::write(&lex_path, split.lexicon.to_file_string()).unwrap();

    let train = parse_dialogue_file(&train_path).unwrap();
    assert_eq!(train, split.train.dialogues);
    let lexicon = EntityLexicon::load(&lex_path, false).unwrap();
    let vocab = Vocabulary::build(&train);
    let samples = encode_corpus(&train, &vocab, &lexicon);

    let config = TrainConfig {
        variant: Variant::EntType,
        embedding_size: 8,
        hidden_size: 8,
        max_epochs: 2,
        max_response_len: 20,
        ..TrainConfig::default()
    };
    let ckpt_path = dir.path().join("m.ckpt");
    let options = TrainOptions { checkpoint_path: Some(ckpt_path.clone()), log_path: None };
    let out = train_model(&config, &vocab, &lexicon, &samples, &samples, &options).unwrap();
    assert_eq!(out.report.epochs.len(), 2);

    let ckpt = Checkpoint::load(&ckpt_path, Some(&vocab.hash())).unwrap();
    let test = parse_dialogue_file(&test_path).unwrap();
    let eval = evaluate_model(&ckpt, &vocab, &lexicon, &test, 20).unwrap();
    assert_eq!(eval.decodes.len(), eval.report.n_responses);
    assert_eq!(eval.report.n_dialogues, 2);

    let other = Vocabulary::from_tokens(["unrelated"]);
    assert!(matches!(
        evaluate_model(&ckpt, &other, &lexicon, &test, 20),
        Err(Error::VocabMismatch { .. })
    ));
}
