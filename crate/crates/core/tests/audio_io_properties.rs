use genre_igs::audio_io::*;
use proptest::prelude::*;

fn manifest(counts: &[(String, usize)]) -> DatasetManifest {
    let entries = counts
        .iter()
        .flat_map(|(genre, n)| {
            (0..*n).map(move |i| ManifestEntry {
                clip_path: format!("{genre}/clip{i:03}.wav"),
                genre: genre.clone(),
                fold: None,
            })
        })
        .collect();
    DatasetManifest::from_entries(entries).unwrap()
}

#[test]
fn even_and_odd_genres_split_in_half() {
    let m = manifest(&[("jazz".into(), 10), ("rock".into(), 10), ("blues".into(), 9)]);
    let split = split_two_fold(&m, 7).unwrap();
    let count = |genre: &str, fold| split.entries.iter().filter(|e| e.genre == genre && e.fold == Some(fold)).count();
    assert_eq!((count("jazz", Fold::A), count("jazz", Fold::B)), (5, 5));
    assert_eq!((count("rock", Fold::A), count("rock", Fold::B)), (5, 5));
    let mut blues = [count("blues", Fold::A), count("blues", Fold::B)];
    blues.sort_unstable();
    assert_eq!(blues, [4, 5]);
}

#[test]
fn singleton_genre_is_named_in_the_error() {
    let m = manifest(&[("jazz".into(), 4), ("polka".into(), 1)]);
    match split_two_fold(&m, 0) {
        Err(genre_igs::Error::InsufficientData(msg)) => assert!(msg.contains("polka")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn manifest_text_round_trips() {
    let text = "# corpus\na.wav\tjazz\tA\n\nb.wav\trock\tB\nc.wav\tjazz\n";
    let m = load_manifest(text).unwrap();
    assert_eq!(m.genre_set, ["jazz", "rock"]);
    assert_eq!(m.entries[2].fold, None);
    assert!(!m.is_fully_assigned());
    assert_eq!(load_manifest(&m.to_tsv()).unwrap(), m);
    assert!(load_manifest("").unwrap().entries.is_empty());
    assert!(matches!(load_manifest("a.wav\tjazz\tC\n"), Err(genre_igs::Error::ManifestFormat { line: 1, .. })));
    assert!(matches!(load_manifest("x\ty\nlonely\n"), Err(genre_igs::Error::ManifestFormat { line: 2, .. })));
    assert!(matches!(load_manifest("a\tx\na\ty\n"), Err(genre_igs::Error::DuplicateEntry(_))));
}

#[test]
fn unsupported_encodings_name_the_field() {
    let good = encode_wav(&[0, 1, 2, 3], 16000);
    // fmt chunk payload starts at byte 20: format tag, channels, rate, byte rate, align, bits
    let cases: [(usize, &[u8], &str); 3] = [(20, &[3, 0], "format_tag"), (22, &[2, 0], "channels"), (34, &[8, 0], "bits_per_sample")];
    for (offset, patch, field) in cases {
        let mut bytes = good.clone();
        bytes[offset..offset + patch.len()].copy_from_slice(patch);
        match decode_wav(&bytes) {
            Err(genre_igs::Error::UnsupportedFormat { field: f, .. }) => assert_eq!(f, field),
            other => panic!("{field}: unexpected {other:?}"),
        }
    }
    assert!(matches!(decode_wav(&good[..30]), Err(genre_igs::Error::Decode(_))));
}

proptest! {
    #[test]
    fn pcm_round_trip_is_exact(samples in prop::collection::vec(any::<i16>(), 0..2000), rate in 8000u32..48001) {
        let clip = decode_wav(&encode_wav(&samples, rate)).unwrap();
        prop_assert_eq!(clip.sample_rate, rate);
        prop_assert!(clip.samples.iter().all(|s| (-1.0..=1.0).contains(s)));
        let back: Vec<i16> = clip.samples.iter().map(|&s| quantize(s)).collect();
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn split_invariants(
        counts in prop::collection::vec(2usize..15, 1..6),
        seed in any::<u64>(),
        rotation in 0usize..100,
    ) {
        let named: Vec<(String, usize)> = counts.iter().enumerate().map(|(i, n)| (format!("g{i}"), *n)).collect();
        let m = manifest(&named);
        let split = split_two_fold(&m, seed).unwrap();
        prop_assert!(split.is_fully_assigned());
        prop_assert_eq!(split.entries.len(), m.entries.len());
        for (genre, n) in &named {
            let a = split.entries.iter().filter(|e| &e.genre == genre && e.fold == Some(Fold::A)).count();
            prop_assert_eq!(a.abs_diff(n - a) <= 1, true);
        }
        let a: Vec<&str> = split.fold_entries(Fold::A).map(|e| e.clip_path.as_str()).collect();
        let b: Vec<&str> = split.fold_entries(Fold::B).map(|e| e.clip_path.as_str()).collect();
        prop_assert!(a.iter().all(|p| !b.contains(p)));
        prop_assert_eq!(a.len() + b.len(), m.entries.len());

        // reordering the manifest does not change any clip's fold
        let mut entries = m.entries.clone();
        let len = entries.len();
        entries.rotate_left(rotation % len);
        entries.reverse();
        let shuffled = split_two_fold(&DatasetManifest::from_entries(entries).unwrap(), seed).unwrap();
        for e in &shuffled.entries {
            let original = split.entries.iter().find(|o| o.clip_path == e.clip_path).unwrap();
            prop_assert_eq!(e.fold, original.fold);
        }
        prop_assert_eq!(split_two_fold(&m, seed).unwrap(), split);
    }
}
