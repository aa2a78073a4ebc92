//! Dataset ingestion and export.
//!
//! Two on-disk layouts are understood:
//!
//! * TSV triples: UTF-8, one `head<TAB>relation<TAB>tail` per line, no
//!   header (`train.txt` / `valid.txt` / `test.txt` in a directory, or a
//!   single file).
//! * Id format: `entity2id.txt` / `relation2id.txt` (`name<TAB>id` after a
//!   count line) plus `train2id.txt` / `valid2id.txt` / `test2id.txt`
//!   (`head_id tail_id rel_id` after a count line, space-separated).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{KgError, RelationId, Triple, TripleStore, Vocab};

fn io_err(path: &Path, source: std::io::Error) -> KgError {
    KgError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, KgError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect())
}

/// Loads a single TSV triple file; vocabularies are assigned ids in
/// first-appearance order and duplicate triples are retained.
pub fn load_tsv(path: impl AsRef<Path>) -> Result<TripleStore, KgError> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let parsed = parse_tsv_lines(path, &lines)?;
    Ok(TripleStore::from_named_triples(
        parsed.iter().map(|(h, r, t)| (*h, *r, *t)),
    ))
}

fn parse_tsv_lines<'a>(
    path: &Path,
    lines: &'a [String],
) -> Result<Vec<(&'a str, &'a str, &'a str)>, KgError> {
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KgError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        out.push((fields[0], fields[1], fields[2]));
    }
    Ok(out)
}

fn parse_count_line(path: &Path, lines: &[String]) -> Result<usize, KgError> {
    let first = lines.first().ok_or_else(|| KgError::Format {
        path: path.to_path_buf(),
        message: "empty file, expected a count line".into(),
    })?;
    first.trim().parse::<usize>().map_err(|_| KgError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("count line is not an integer: {first:?}"),
    })
}

fn load_id_vocab(path: &Path) -> Result<Vocab, KgError> {
    let lines = read_lines(path)?;
    let declared = parse_count_line(path, &lines)?;
    let entries: Vec<&String> = lines[1..].iter().filter(|l| !l.is_empty()).collect();
    if entries.len() != declared {
        return Err(KgError::Format {
            path: path.to_path_buf(),
            message: format!(
                "count line declares {declared} entries but {} follow",
                entries.len()
            ),
        });
    }
    let mut slots: Vec<Option<String>> = vec![None; declared];
    for (i, line) in entries.iter().enumerate() {
        let (name, id_str) = line.rsplit_once('\t').ok_or_else(|| KgError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: "expected name<TAB>id".into(),
        })?;
        let id: usize = id_str.trim().parse().map_err(|_| KgError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: format!("id is not an integer: {id_str:?}"),
        })?;
        if id >= declared {
            return Err(KgError::Format {
                path: path.to_path_buf(),
                message: format!("id {id} out of range (count = {declared})"),
            });
        }
        if slots[id].is_some() {
            return Err(KgError::Format {
                path: path.to_path_buf(),
                message: format!("duplicate id {id}"),
            });
        }
        slots[id] = Some(name.to_string());
    }
    let names = slots
        .into_iter()
        .map(|s| s.expect("dense by pigeonhole"))
        .collect();
    Ok(Vocab::from_names(names))
}

fn load_id_triple_file(path: &Path, n_e: usize, n_r: usize) -> Result<Vec<Triple>, KgError> {
    let lines = read_lines(path)?;
    let declared = parse_count_line(path, &lines)?;
    let entries: Vec<&String> = lines[1..].iter().filter(|l| !l.is_empty()).collect();
    if entries.len() != declared {
        return Err(KgError::Format {
            path: path.to_path_buf(),
            message: format!(
                "count line declares {declared} triples but {} follow",
                entries.len()
            ),
        });
    }
    let mut triples = Vec::with_capacity(declared);
    for (i, line) in entries.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(KgError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("expected head_id tail_id rel_id, got {} fields", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<usize, KgError> {
            s.parse().map_err(|_| KgError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("{what} is not an integer: {s:?}"),
            })
        };
        let head = parse(fields[0], "head id")?;
        let tail = parse(fields[1], "tail id")?;
        let relation = parse(fields[2], "relation id")?;
        if head >= n_e || tail >= n_e {
            return Err(KgError::Format {
                path: path.to_path_buf(),
                message: format!("unknown entity id on line {} (N_e = {n_e})", i + 2),
            });
        }
        if relation >= n_r {
            return Err(KgError::Format {
                path: path.to_path_buf(),
                message: format!("unknown relation id on line {} (N_r = {n_r})", i + 2),
            });
        }
        triples.push(Triple::new(head, relation, tail));
    }
    Ok(triples)
}

/// Loads the training split of an id-format directory
/// (`entity2id.txt`, `relation2id.txt`, `train2id.txt`).
pub fn load_id_format(dir: impl AsRef<Path>) -> Result<TripleStore, KgError> {
    let dir = dir.as_ref();
    let entities = load_id_vocab(&dir.join("entity2id.txt"))?;
    let relations = load_id_vocab(&dir.join("relation2id.txt"))?;
    let triples = load_id_triple_file(&dir.join("train2id.txt"), entities.len(), relations.len())?;
    Ok(TripleStore::from_parts(entities, relations, triples))
}

/// Loads an additional id-format triple file (e.g. `valid2id.txt`) against
/// an existing store's vocabularies.
pub fn load_id_triples(
    path: impl AsRef<Path>,
    store: &TripleStore,
) -> Result<Vec<Triple>, KgError> {
    load_id_triple_file(
        path.as_ref(),
        store.entity_count(),
        store.relation_count(),
    )
}

/// A training store plus optional held-out splits sharing its vocabularies.
///
/// Vocabularies cover all splits; incidence indices are built from the
/// training triples only.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub store: TripleStore,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub name: String,
}

impl Dataset {
    /// Loads a dataset from a TSV directory (`train.txt` [+ `valid.txt`,
    /// `test.txt`]), an id-format directory, or a single TSV file.
    pub fn load(path: impl AsRef<Path>) -> Result<Dataset, KgError> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        if path.is_dir() {
            if path.join("train2id.txt").exists() {
                let store = load_id_format(path)?;
                let valid = Self::optional_id_split(&path.join("valid2id.txt"), &store)?;
                let test = Self::optional_id_split(&path.join("test2id.txt"), &store)?;
                Ok(Dataset {
                    store,
                    valid,
                    test,
                    name,
                })
            } else if path.join("train.txt").exists() {
                Self::load_tsv_dir(path, name)
            } else {
                Err(KgError::Format {
                    path: path.to_path_buf(),
                    message: "directory contains neither train2id.txt nor train.txt".into(),
                })
            }
        } else {
            let store = load_tsv(path)?;
            Ok(Dataset {
                store,
                valid: Vec::new(),
                test: Vec::new(),
                name,
            })
        }
    }

    fn optional_id_split(path: &Path, store: &TripleStore) -> Result<Vec<Triple>, KgError> {
        if path.exists() {
            load_id_triples(path, store)
        } else {
            Ok(Vec::new())
        }
    }

    fn load_tsv_dir(dir: &Path, name: String) -> Result<Dataset, KgError> {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut splits: Vec<Vec<Triple>> = Vec::new();
        for file in ["train.txt", "valid.txt", "test.txt"] {
            let path = dir.join(file);
            if !path.exists() {
                splits.push(Vec::new());
                continue;
            }
            let lines = read_lines(&path)?;
            let parsed = parse_tsv_lines(&path, &lines)?;
            splits.push(
                parsed
                    .iter()
                    .map(|(h, r, t)| {
                        Triple::new(entities.intern(h), relations.intern(r), entities.intern(t))
                    })
                    .collect(),
            );
        }
        let test = splits.pop().unwrap();
        let valid = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        Ok(Dataset {
            store: TripleStore::from_parts(entities, relations, train),
            valid,
            test,
            name,
        })
    }
}

/// Relation names and ids for a split-augmented dataset.
///
/// The first unit of each origin keeps the origin's name and id; every
/// further unit gets `<origin-name>#split<k>` (k = 1, 2, ... in unit
/// order) and a fresh id starting at the original `N_r`.
#[derive(Debug, Clone)]
pub struct SplitNaming {
    expanded: Vocab,
    unit_relation: Vec<RelationId>,
}

impl SplitNaming {
    pub fn new(relations: &Vocab, unit_origins: &[RelationId]) -> Result<SplitNaming, KgError> {
        for name in relations.names() {
            if name.contains('#') {
                return Err(KgError::Domain(format!(
                    "relation name {name:?} contains '#', which the split suffix reserves"
                )));
            }
        }
        let n_r = relations.len();
        let mut expanded = Vocab::from_names(relations.names().to_vec());
        let mut unit_relation = Vec::with_capacity(unit_origins.len());
        let mut splits_per_origin = vec![0usize; n_r];
        for &origin in unit_origins {
            if origin >= n_r {
                return Err(KgError::Domain(format!(
                    "lineage origin {origin} out of range (N_r = {n_r})"
                )));
            }
            let seen = splits_per_origin[origin];
            splits_per_origin[origin] += 1;
            if seen == 0 {
                unit_relation.push(origin);
            } else {
                let name = format!("{}#split{}", relations.name(origin).unwrap(), seen);
                unit_relation.push(expanded.intern(&name));
            }
        }
        Ok(SplitNaming {
            expanded,
            unit_relation,
        })
    }

    /// Relation vocabulary of the exported dataset.
    pub fn relations(&self) -> &Vocab {
        &self.expanded
    }

    /// Exported relation id for a competitive unit.
    pub fn relation_of_unit(&self, unit: usize) -> Option<RelationId> {
        self.unit_relation.get(unit).copied()
    }

    fn relabel(&self, triples: &[Triple], assignment: &[usize]) -> Result<Vec<Triple>, KgError> {
        if triples.len() != assignment.len() {
            return Err(KgError::Domain(format!(
                "assignment covers {} triples but the split has {}",
                assignment.len(),
                triples.len()
            )));
        }
        triples
            .iter()
            .zip(assignment)
            .map(|(t, &unit)| {
                let relation = self.relation_of_unit(unit).ok_or_else(|| {
                    KgError::Domain(format!("assignment names unknown unit {unit}"))
                })?;
                Ok(Triple::new(t.head, relation, t.tail))
            })
            .collect()
    }
}

fn create_dir(dir: &Path) -> Result<(), KgError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, content: &str) -> Result<(), KgError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| io_err(path, e))
}

fn tsv_content(store_entities: &Vocab, relations: &Vocab, triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(store_entities.name(t.head).unwrap());
        out.push('\t');
        out.push_str(relations.name(t.relation).unwrap());
        out.push('\t');
        out.push_str(store_entities.name(t.tail).unwrap());
        out.push('\n');
    }
    out
}

fn vocab_content(vocab: &Vocab) -> String {
    let mut out = format!("{}\n", vocab.len());
    for (i, name) in vocab.names().iter().enumerate() {
        out.push_str(&format!("{name}\t{i}\n"));
    }
    out
}

fn id_triples_content(triples: &[Triple]) -> String {
    let mut out = format!("{}\n", triples.len());
    for t in triples {
        out.push_str(&format!("{} {} {}\n", t.head, t.tail, t.relation));
    }
    out
}

/// Writes the split-augmented training graph in both TSV and id formats.
///
/// `assignment[i]` is the competitive unit triple `i` was routed to and
/// `unit_origins[u]` the relation unit `u` descends from. Relabeling is a
/// pure function of (triple, assignment).
pub fn export_split(
    store: &TripleStore,
    assignment: &[usize],
    unit_origins: &[RelationId],
    dir: impl AsRef<Path>,
) -> Result<(), KgError> {
    let naming = SplitNaming::new(store.relations(), unit_origins)?;
    let dir = dir.as_ref();
    create_dir(dir)?;
    let train = naming.relabel(store.triples(), assignment)?;
    write_split_files(store, &naming, &train, None, None, dir)
}

/// Like [`export_split`], but also relabels and writes the held-out splits.
pub fn export_split_dataset(
    ds: &Dataset,
    assignment_train: &[usize],
    assignment_valid: &[usize],
    assignment_test: &[usize],
    unit_origins: &[RelationId],
    dir: impl AsRef<Path>,
) -> Result<(), KgError> {
    let naming = SplitNaming::new(ds.store.relations(), unit_origins)?;
    let dir = dir.as_ref();
    create_dir(dir)?;
    let train = naming.relabel(ds.store.triples(), assignment_train)?;
    let valid = naming.relabel(&ds.valid, assignment_valid)?;
    let test = naming.relabel(&ds.test, assignment_test)?;
    write_split_files(
        &ds.store,
        &naming,
        &train,
        Some(&valid),
        Some(&test),
        dir,
    )
}

fn write_split_files(
    store: &TripleStore,
    naming: &SplitNaming,
    train: &[Triple],
    valid: Option<&[Triple]>,
    test: Option<&[Triple]>,
    dir: &Path,
) -> Result<(), KgError> {
    let entities = store.entities();
    let relations = naming.relations();
    write_file(&dir.join("train.txt"), &tsv_content(entities, relations, train))?;
    write_file(&dir.join("entity2id.txt"), &vocab_content(entities))?;
    write_file(&dir.join("relation2id.txt"), &vocab_content(relations))?;
    write_file(&dir.join("train2id.txt"), &id_triples_content(train))?;
    if let Some(valid) = valid {
        if !valid.is_empty() {
            write_file(&dir.join("valid.txt"), &tsv_content(entities, relations, valid))?;
            write_file(&dir.join("valid2id.txt"), &id_triples_content(valid))?;
        }
    }
    if let Some(test) = test {
        if !test.is_empty() {
            write_file(&dir.join("test.txt"), &tsv_content(entities, relations, test))?;
            write_file(&dir.join("test2id.txt"), &id_triples_content(test))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_tmp(dir: &Path, name: &str, content: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(content.as_bytes()).unwrap();
    }

    #[test]
    fn tsv_loader_counts_relations() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "g.txt", "a\tr0\tb\nb\tr1\tc\na\tr0\tc\n");
        let store = load_tsv(dir.path().join("g.txt")).unwrap();
        assert_eq!(store.relation_count(), 2);
        assert_eq!(store.triples().len(), 3);
    }

    #[test]
    fn malformed_tsv_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "g.txt", "a\tr0\tb\na\tb\n");
        match load_tsv(dir.path().join("g.txt")) {
            Err(KgError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            load_tsv("/nonexistent/path/graph.txt"),
            Err(KgError::Io { .. })
        ));
    }

    #[test]
    fn duplicate_triples_are_retained() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "g.txt", "a\tr\tb\na\tr\tb\n");
        let store = load_tsv(dir.path().join("g.txt")).unwrap();
        assert_eq!(store.triples().len(), 2);
    }

    #[test]
    fn id_format_loads_declared_counts() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(
            dir.path(),
            "entity2id.txt",
            "5\ne0\t0\ne1\t1\ne2\t2\ne3\t3\ne4\t4\n",
        );
        write_tmp(dir.path(), "relation2id.txt", "2\nlikes\t0\nknows\t1\n");
        write_tmp(dir.path(), "train2id.txt", "3\n0 1 0\n1 2 1\n3 4 0\n");
        let store = load_id_format(dir.path()).unwrap();
        assert_eq!(store.entity_count(), 5);
        assert_eq!(store.relation_count(), 2);
        assert_eq!(store.triples()[1], Triple::new(1, 1, 2));
    }

    #[test]
    fn id_format_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "entity2id.txt", "2\ne0\t0\ne1\t1\n");
        write_tmp(dir.path(), "relation2id.txt", "1\nr\t0\n");
        write_tmp(dir.path(), "train2id.txt", "10\n0 1 0\n");
        assert!(matches!(
            load_id_format(dir.path()),
            Err(KgError::Format { .. })
        ));
    }

    #[test]
    fn id_format_duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "entity2id.txt", "2\ne0\t0\ne1\t0\n");
        write_tmp(dir.path(), "relation2id.txt", "1\nr\t0\n");
        write_tmp(dir.path(), "train2id.txt", "0\n");
        assert!(matches!(
            load_id_format(dir.path()),
            Err(KgError::Format { .. })
        ));
    }

    #[test]
    fn id_format_unknown_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "entity2id.txt", "2\ne0\t0\ne1\t1\n");
        write_tmp(dir.path(), "relation2id.txt", "1\nr\t0\n");
        write_tmp(dir.path(), "train2id.txt", "1\n0 7 0\n");
        assert!(matches!(
            load_id_format(dir.path()),
            Err(KgError::Format { .. })
        ));
    }

    #[test]
    fn export_then_reload_preserves_the_triple_multiset() {
        let store = TripleStore::from_named_triples(vec![
            ("a", "r0", "b"),
            ("b", "r1", "c"),
            ("a", "r0", "b"),
            ("c", "r0", "a"),
        ]);
        // vacuous split: one unit per relation
        let assignment: Vec<usize> = store.triples().iter().map(|t| t.relation).collect();
        let origins: Vec<RelationId> = (0..store.relation_count()).collect();
        let dir = tempfile::tempdir().unwrap();
        export_split(&store, &assignment, &origins, dir.path()).unwrap();

        let from_id = load_id_format(dir.path()).unwrap();
        let from_tsv = load_tsv(dir.path().join("train.txt")).unwrap();
        let mut orig = store.triples().to_vec();
        let mut id_triples = from_id.triples().to_vec();
        orig.sort();
        id_triples.sort();
        assert_eq!(orig, id_triples);
        assert_eq!(from_tsv.triples().len(), store.triples().len());
        // vacuous split leaves the relation vocabulary untouched
        assert_eq!(from_id.relation_count(), store.relation_count());
        assert_eq!(from_id.relations().names(), store.relations().names());
    }

    #[test]
    fn split_export_names_and_partitions_match_the_assignment() {
        let store = TripleStore::from_named_triples(vec![
            ("a", "contains", "b"),
            ("c", "contains", "d"),
            ("e", "contains", "f"),
            ("a", "other", "c"),
        ]);
        // relation 0 split into units {0, 2}; relation 1 stays on unit 1
        let unit_origins = vec![0, 1, 0];
        let assignment = vec![0, 2, 2, 1];
        let dir = tempfile::tempdir().unwrap();
        export_split(&store, &assignment, &unit_origins, dir.path()).unwrap();

        let reloaded = load_id_format(dir.path()).unwrap();
        assert_eq!(reloaded.relation_count(), 3);
        assert_eq!(reloaded.relations().name(2), Some("contains#split1"));
        // groups by relation match the assignment partition
        let by_rel = |r: usize| -> Vec<Triple> {
            reloaded
                .triples()
                .iter()
                .copied()
                .filter(|t| t.relation == r)
                .collect()
        };
        assert_eq!(by_rel(0).len(), 1);
        assert_eq!(by_rel(2).len(), 2);
        assert_eq!(by_rel(1).len(), 1);
    }

    #[test]
    fn hash_in_relation_names_is_rejected_at_export() {
        let store = TripleStore::from_named_triples(vec![("a", "bad#name", "b")]);
        let err = export_split(&store, &[0], &[0], "/tmp/unused-vcoder-export");
        assert!(matches!(err, Err(KgError::Domain(_))));
    }

    #[test]
    fn dataset_vocab_spans_all_splits_but_incidence_is_train_only() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "train.txt", "a\tr0\tb\n");
        write_tmp(dir.path(), "valid.txt", "a\tr0\tc\n");
        write_tmp(dir.path(), "test.txt", "d\tr1\ta\n");
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.store.entity_count(), 4); // a b c d
        assert_eq!(ds.store.relation_count(), 2); // r0 r1
        assert_eq!(ds.store.triples().len(), 1);
        assert_eq!(ds.valid.len(), 1);
        assert_eq!(ds.test.len(), 1);
        // c and d appear only in held-out splits: no incidence
        let c = ds.store.entities().id("c").unwrap();
        assert_eq!(ds.store.binary_encoding(c).unwrap(), vec![false, false]);
    }
}
