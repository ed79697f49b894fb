//! Deterministic synthetic Python corpora.
//!
//! Projects are built from a small library of statement idioms. Each idiom
//! is a five-line snippet (two lines, a centrepiece, two lines) with a TODO
//! comment that belongs right above the centrepiece and identifier slots
//! `{a}`, `{b}`, `{c}`. Methods either carry an idiom with its TODO, carry it
//! silently (a TODO-missed method), or hold filler statements only.
//!
//! Three generators sit on top:
//! * [`generate_corpus`] builds projects whose TODO groups feed the dataset
//!   builder and the full pipeline.
//! * [`generate_planted_pools`] builds candidate pools with exactly one
//!   planted equivalent of an anchor's idiom, optionally with one identifier
//!   renamed.
//! * [`separable_triplets`] builds token-level triplets whose positives share
//!   most centrepiece tokens with the anchor and whose negatives share none.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_code_block, BlockGeometry, BlockOrigin, CodeBlock, DatasetError, TripletSample};
use crate::eval::CandidatePool;
use crate::extract::{extract_file, MethodRecord, ParseOptions, RuleCounts, TodoMethod};
use crate::io::derive_rng;
use crate::miner::TodoLine;

/// A five-line statement pattern with the TODO that flags it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Idiom {
    pub todo: &'static str,
    pub before: [&'static str; 2],
    pub centre: &'static str,
    pub after: [&'static str; 2],
}

macro_rules! idiom {
    ($todo:expr, [$b1:expr, $b2:expr], $cen:expr, [$a1:expr, $a2:expr]) => {
        Idiom {
            todo: $todo,
            before: [$b1, $b2],
            centre: $cen,
            after: [$a1, $a2],
        }
    };
}

pub const IDIOMS: &[Idiom] = &[
    idiom!(
        "TODO: use a context manager so the handle gets closed",
        ["{a} = os.path.join({b}, 'cache')", "mode = 'r'"],
        "fh = open({a}, mode)",
        ["{c} = fh.read()", "fh.close()"]
    ),
    idiom!(
        "TODO: replace manual string concatenation with join",
        ["{c} = ''", "sep = ','"],
        "for item in {a}: {c} = {c} + str(item) + sep",
        ["{c} = {c}[:-1]", "{b} = len({c})"]
    ),
    idiom!(
        "TODO: switch to a dict lookup instead of a linear scan",
        ["{c} = None", "wanted = {b}.key"],
        "for entry in {a}: {c} = entry if entry.key == wanted else {c}",
        ["if {c} is None: raise KeyError(wanted)", "{b}.hits += 1"]
    ),
    idiom!(
        "TODO: handle timezone aware timestamps properly",
        ["stamp = {a}.get('created')", "fmt = '%Y-%m-%d %H:%M:%S'"],
        "{b} = datetime.strptime(stamp, fmt)",
        ["{c} = {b}.replace(tzinfo=None)", "{a}['created'] = {c}"]
    ),
    idiom!(
        "TODO: avoid reading the whole file into memory",
        ["size = os.path.getsize({a})", "logger.debug('reading %d bytes', size)"],
        "{b} = open({a}, 'rb').read()",
        ["{c} = hashlib.md5({b}).hexdigest()", "self.digests[{a}] = {c}"]
    ),
    idiom!(
        "TODO: retry the request with exponential backoff",
        ["url = self.base_url + {a}", "headers = dict(accept='application/json')"],
        "{b} = requests.get(url, headers=headers, timeout=5)",
        ["{b}.raise_for_status()", "{c} = {b}.json()"]
    ),
    idiom!(
        "TODO: use a set here to speed up membership checks",
        ["{c} = []", "seen = list({b})"],
        "{c} = [x for x in {a} if x not in seen]",
        ["seen.extend({c})", "self.total += len({c})"]
    ),
    idiom!(
        "TODO: parameterize this query to prevent sql injection",
        ["cursor = self.conn.cursor()", "table = self.table_name"],
        "cursor.execute('SELECT * FROM ' + table + ' WHERE id = ' + str({a}))",
        ["{b} = cursor.fetchall()", "cursor.close()"]
    ),
    idiom!(
        "TODO: deep copy the defaults to avoid shared mutation",
        ["defaults = self.DEFAULTS", "{b} = kwargs.get('overrides', dict())"],
        "{a} = dict(defaults)",
        ["{a}.update({b})", "{c} = {a}.get('mode', 'fast')"]
    ),
    idiom!(
        "TODO: compile the regex once at module level",
        ["pattern = r'(\\d+)-(\\d+)'", "{c} = []"],
        "{b} = re.compile(pattern).findall({a})",
        ["{c}.extend(int(x) for x, _ in {b})", "{c}.sort()"]
    ),
    idiom!(
        "TODO: use subprocess run with check instead of os system",
        ["cmd = 'tar -xzf ' + {a}", "logger.info('extracting %s', {a})"],
        "{b} = os.system(cmd)",
        ["if {b} != 0: raise RuntimeError(cmd)", "{c} = os.listdir('.')"]
    ),
    idiom!(
        "TODO: call json load directly on the file object",
        ["fh = open({a})", "raw = fh.read()"],
        "{b} = json.loads(raw)",
        ["fh.close()", "{c} = {b}.get('version', 1)"]
    ),
    idiom!(
        "TODO: replace the bare except with specific exceptions",
        ["{c} = None", "attempts = 0"],
        "try: {c} = int({a})",
        ["except: {c} = {b}", "attempts += 1"]
    ),
    idiom!(
        "TODO: cache the computed weight instead of recomputing it",
        ["{c} = self.settings", "depth = {c}.max_depth"],
        "{b} = sum(math.factorial(i) for i in range(depth))",
        ["{a}.weight = {b} / depth", "{a}.dirty = False"]
    ),
    idiom!(
        "TODO: use pathlib instead of string path manipulation",
        ["root = self.root_dir", "name = {a}.name"],
        "{b} = root + '/' + name + '/' + str({c})",
        ["os.makedirs({b}, exist_ok=True)", "self.paths.append({b})"]
    ),
    idiom!(
        "TODO: use enumerate instead of a manual index counter",
        ["i = 0", "{c} = dict()"],
        "for item in {a}: {c}[i] = item; i += 1",
        ["{b} = len({c})", "self.index = {c}"]
    ),
    idiom!(
        "TODO: sort once outside the loop for better performance",
        ["{c} = []", "limit = self.limit"],
        "for {b} in {a}: {c} = sorted({c} + [{b}])[:limit]",
        ["self.top = {c}", "self.count = len({c})"]
    ),
    idiom!(
        "TODO: validate the input shape before reshaping",
        ["{b} = np.asarray({a})", "rows = {b}.shape[0]"],
        "{c} = {b}.reshape(rows, -1)",
        ["{c} = {c}.astype('float32')", "self.features = {c}"]
    ),
    idiom!(
        "TODO: use logging instead of print statements",
        ["{c} = time.time() - self.started", "msg = 'elapsed %.2f' % {c}"],
        "print(msg, {a})",
        ["self.timings.append({c})", "{b} = len(self.timings)"]
    ),
    idiom!(
        "TODO: close the database connection on error",
        ["{b} = sqlite3.connect(self.db_path)", "cur = {b}.cursor()"],
        "cur.execute('INSERT INTO events VALUES (?, ?)', ({a}, {c}))",
        ["{b}.commit()", "{b}.close()"]
    ),
    idiom!(
        "TODO: use a thread pool rather than spawning threads",
        ["{c} = []", "target = self.worker"],
        "for job in {a}: {c}.append(threading.Thread(target=target, args=(job,)))",
        ["[t.start() for t in {c}]", "[t.join() for t in {c}]"]
    ),
    idiom!(
        "TODO: decode the bytes with an explicit encoding",
        ["{b} = sock.recv(4096)", "self.received += len({b})"],
        "{a} = str({b})[2:-1]",
        ["{c} = {a}.split(',')", "self.lines.extend({c})"]
    ),
    idiom!(
        "TODO: use collections counter for word tallies",
        ["{c} = dict()", "words = {a}.split()"],
        "for w in words: {c}[w] = {c}.get(w, 0) + 1",
        ["{b} = max({c}, key={c}.get)", "self.vocab.update({c})"]
    ),
    idiom!(
        "TODO: check for division by zero on empty input",
        ["total = sum({a})", "{b} = len({a})"],
        "{c} = total / {b}",
        ["self.mean = {c}", "self.samples = {b}"]
    ),
];

const FILLERS: &[&str] = &[
    "{a} = {b} + 1",
    "{a} = self.{b}",
    "self.{a} = {b}",
    "{a} = [{b}, {c}]",
    "{a} = {b}.get('{c}')",
    "if {a} is None: {a} = {b}",
    "{a} = max({b}, {c})",
    "{a} = str({b}).lower()",
    "{a} = len({b}) * 2",
    "logger.debug('%s', {a})",
    "{a} = {b} or {c}",
    "{a} = ({b}, {c})",
    "{a} = {b}[0]",
    "{a} = isinstance({b}, dict)",
    "{a}.append({b})",
    "{a} = sorted({b})",
    "{a} = {b} - {c}",
    "assert {a} is not None",
    "{a} = getattr(self, '{b}', None)",
    "{a} = int({b})",
    "{a} = {b}.copy()",
    "{a} = abs({b} - {c})",
    "{a} = min({b}, 10)",
    "{a} = list({b})",
    "{a} = float({b}) / 3",
    "self.calls += 1",
    "{a} = {b} * {c}",
    "{a} = round({b}, 2)",
    "{a} = bool({b})",
    "{a} = {b}.strip()",
];

const NOUNS: &[&str] = &[
    "data", "items", "path", "value", "result", "buf", "config", "record", "entry", "node", "user", "key", "text",
    "payload", "count", "index", "limit", "offset", "row", "col", "token", "stream", "handle", "batch", "frame",
    "chunk", "source", "target", "params", "options", "name", "size", "score", "queue", "cache", "state", "event",
    "message", "header", "field", "layer", "owner", "group", "page", "query", "span", "slot", "label", "width",
    "weight",
];

const PREFIXES: &[&str] = &[
    "raw", "new", "old", "tmp", "cur", "next", "prev", "max", "min", "base", "local", "user", "first", "last",
];

const VERBS: &[&str] = &[
    "load", "save", "build", "parse", "render", "update", "fetch", "compute", "apply", "collect", "merge", "split",
    "check", "handle", "prepare", "format", "refresh", "resolve", "scan", "sync",
];

/// A fresh snake_case identifier, e.g. `raw_payload`.
pub fn identifier<R: Rng + ?Sized>(rng: &mut R) -> String {
    let noun = NOUNS.choose(rng).expect("nouns");
    if rng.random_bool(0.6) {
        format!("{}_{}", PREFIXES.choose(rng).expect("prefixes"), noun)
    } else {
        noun.to_string()
    }
}

/// Slot fillers `{a}`, `{b}`, `{c}`, pairwise distinct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slots {
    pub a: String,
    pub b: String,
    pub c: String,
}

impl Slots {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut picked: Vec<String> = Vec::with_capacity(3);
        while picked.len() < 3 {
            let id = identifier(rng);
            if !picked.contains(&id) {
                picked.push(id);
            }
        }
        let c = picked.pop().expect("three");
        let b = picked.pop().expect("three");
        let a = picked.pop().expect("three");
        Self { a, b, c }
    }

    pub fn fill(&self, template: &str) -> String {
        template.replace("{a}", &self.a).replace("{b}", &self.b).replace("{c}", &self.c)
    }
}

/// Slot letters used by a template.
fn slots_in(template: &str) -> Vec<char> {
    ['a', 'b', 'c']
        .into_iter()
        .filter(|s| template.contains(&format!("{{{s}}}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdiomUse {
    pub idiom: usize,
    pub slots: Slots,
    pub with_todo: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub params: [String; 2],
    pub pre: Vec<String>,
    pub idiom: Option<IdiomUse>,
    pub post: Vec<String>,
    pub returns: String,
}

fn filler_lines<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| Slots::random(rng).fill(FILLERS.choose(rng).expect("fillers")))
        .collect()
}

impl MethodSpec {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, name: String, idiom: Option<IdiomUse>) -> Self {
        let pre_n = rng.random_range(1..=3);
        let post_n = rng.random_range(0..=2);
        let body_n = if idiom.is_some() { 0 } else { rng.random_range(3..=7) };
        Self {
            name,
            params: [identifier(rng), identifier(rng)],
            pre: filler_lines(rng, pre_n + body_n),
            idiom,
            post: filler_lines(rng, post_n),
            returns: identifier(rng),
        }
    }
}

/// Where a method landed in its rendered file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedMethod {
    pub qualified_name: String,
    pub start_line: u32,
    pub idiom: Option<usize>,
    pub todo_line: Option<u32>,
    pub centre_line: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFile {
    pub text: String,
    pub methods: Vec<RenderedMethod>,
    /// TODO comment lines with their text, as a diff would report them.
    pub todo_lines: Vec<(u32, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthFile {
    pub path: String,
    pub class_name: String,
    pub methods: Vec<MethodSpec>,
}

impl SynthFile {
    pub fn has_todos(&self) -> bool {
        self.methods.iter().any(|m| m.idiom.as_ref().is_some_and(|i| i.with_todo))
    }

    /// Python source; with `with_todos` off, TODO comments are left out.
    pub fn render(&self, with_todos: bool) -> RenderedFile {
        let mut lines: Vec<String> = vec![
            "import os".into(),
            "import re".into(),
            String::new(),
            String::new(),
            format!("class {}:", self.class_name),
        ];
        let mut methods = Vec::new();
        let mut todo_lines = Vec::new();
        let body = "        ";
        for m in &self.methods {
            lines.push(String::new());
            lines.push(format!("    def {}(self, {}, {}):", m.name, m.params[0], m.params[1]));
            let start_line = lines.len() as u32;
            for l in &m.pre {
                lines.push(format!("{body}{l}"));
            }
            let mut todo_line = None;
            let mut centre_line = None;
            if let Some(u) = &m.idiom {
                let idiom = &IDIOMS[u.idiom];
                for b in idiom.before {
                    lines.push(format!("{body}{}", u.slots.fill(b)));
                }
                if u.with_todo && with_todos {
                    lines.push(format!("{body}# {}", idiom.todo));
                    todo_line = Some(lines.len() as u32);
                    todo_lines.push((lines.len() as u32, lines.last().expect("pushed").clone()));
                }
                lines.push(format!("{body}{}", u.slots.fill(idiom.centre)));
                centre_line = Some(lines.len() as u32);
                for a in idiom.after {
                    lines.push(format!("{body}{}", u.slots.fill(a)));
                }
            }
            for l in &m.post {
                lines.push(format!("{body}{l}"));
            }
            lines.push(format!("{body}return {}", m.returns));
            methods.push(RenderedMethod {
                qualified_name: format!("{}.{}", self.class_name, m.name),
                start_line,
                idiom: m.idiom.as_ref().map(|u| u.idiom),
                todo_line,
                centre_line,
            });
        }
        let mut text = lines.join("\n");
        text.push('\n');
        RenderedFile {
            text,
            methods,
            todo_lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthProject {
    pub name: String,
    pub files: Vec<SynthFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub projects: usize,
    pub files_per_project: usize,
    /// Inclusive range of methods per file.
    pub methods_per_file: (usize, usize),
    pub groups_per_project: usize,
    /// Inclusive range of TODO methods per group.
    pub group_size: (usize, usize),
    /// Share of non-TODO methods that silently carry an idiom.
    pub silent_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            projects: 30,
            files_per_project: 3,
            methods_per_file: (6, 10),
            groups_per_project: 5,
            group_size: (2, 3),
            silent_fraction: 0.25,
        }
    }
}

fn class_name<R: Rng + ?Sized>(rng: &mut R) -> String {
    let noun = NOUNS.choose(rng).expect("nouns");
    let mut c = noun.chars();
    let head = c.next().expect("non-empty").to_ascii_uppercase();
    format!("{head}{}{}", c.as_str(), ["Manager", "Service", "Store", "Handler", "Client"].choose(rng).expect("suffix"))
}

/// Method names unique within one file.
struct NameSource(BTreeSet<String>);

impl NameSource {
    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        loop {
            let name = format!("{}_{}", VERBS.choose(rng).expect("verbs"), NOUNS.choose(rng).expect("nouns"));
            let name = if self.0.contains(&name) {
                format!("{name}_{}", self.0.len())
            } else {
                name
            };
            if self.0.insert(name.clone()) {
                return name;
            }
        }
    }
}

fn filler_or_silent<R: Rng + ?Sized>(rng: &mut R, silent_fraction: f64, avoid: &BTreeSet<usize>) -> Option<IdiomUse> {
    if !rng.random_bool(silent_fraction) {
        return None;
    }
    let choices: Vec<usize> = (0..IDIOMS.len()).filter(|i| !avoid.contains(i)).collect();
    choices.choose(rng).map(|&idiom| IdiomUse {
        idiom,
        slots: Slots::random(rng),
        with_todo: false,
    })
}

/// Projects whose TODO groups share idiom text within the project.
pub fn generate_corpus(cfg: &CorpusConfig, seed: u64) -> Vec<SynthProject> {
    (0..cfg.projects)
        .map(|p| {
            let mut rng = derive_rng(seed, &format!("project-{p}"));
            let name = format!("proj{p:02}-{}", NOUNS.choose(&mut rng).expect("nouns"));
            let files_n = cfg.files_per_project.max(1);
            let mut files: Vec<Vec<Option<IdiomUse>>> = vec![Vec::new(); files_n];
            let mut group_idioms: Vec<usize> = (0..IDIOMS.len()).collect();
            group_idioms.shuffle(&mut rng);
            group_idioms.truncate(cfg.groups_per_project.min(IDIOMS.len()));
            for &idiom in &group_idioms {
                let size = rng.random_range(cfg.group_size.0..=cfg.group_size.1);
                for _ in 0..size {
                    let f = rng.random_range(0..files_n);
                    files[f].push(Some(IdiomUse {
                        idiom,
                        slots: Slots::random(&mut rng),
                        with_todo: true,
                    }));
                }
            }
            let avoid: BTreeSet<usize> = group_idioms.iter().copied().collect();
            let files = files
                .into_iter()
                .enumerate()
                .map(|(i, mut uses)| {
                    let target = rng.random_range(cfg.methods_per_file.0..=cfg.methods_per_file.1);
                    while uses.len() < target {
                        uses.push(filler_or_silent(&mut rng, cfg.silent_fraction, &avoid));
                    }
                    uses.shuffle(&mut rng);
                    let mut names = NameSource(BTreeSet::new());
                    let methods = uses
                        .into_iter()
                        .map(|u| {
                            let n = names.next(&mut rng);
                            MethodSpec::random(&mut rng, n, u)
                        })
                        .collect();
                    SynthFile {
                        path: format!("pkg/module_{i}.py"),
                        class_name: class_name(&mut rng),
                        methods,
                    }
                })
                .collect();
            SynthProject { name, files }
        })
        .collect()
}

/// TODO methods and all methods of rendered projects, extracted without git.
#[derive(Debug, Clone, Default)]
pub struct ExtractedCorpus {
    pub todo_methods: Vec<TodoMethod>,
    pub methods: Vec<MethodRecord>,
    pub counts: RuleCounts,
}

/// Runs the extractor over every rendered file, as if each file's TODOs had
/// just been introduced in a commit named `synthetic`.
pub fn extract_projects(projects: &[SynthProject], opts: &ParseOptions) -> ExtractedCorpus {
    let mut out = ExtractedCorpus::default();
    for project in projects {
        for file in &project.files {
            let r = file.render(true);
            let todo_lines: Vec<TodoLine> = r
                .todo_lines
                .iter()
                .map(|(line, text)| TodoLine {
                    path: file.path.clone(),
                    line: *line,
                    text: text.clone(),
                })
                .collect();
            let x = extract_file(&project.name, &file.path, "synthetic", r.text.as_bytes(), &todo_lines, opts);
            out.todo_methods.extend(x.kept);
            out.methods.extend(x.methods);
            out.counts.merge(&x.counts);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPoolConfig {
    pub pools: usize,
    /// Inclusive range of candidate methods per pool.
    pub pool_size: (usize, usize),
    /// Share of pools whose plant renames one centrepiece identifier.
    pub rename_fraction: f64,
    /// Share of distractors that silently carry another idiom.
    pub silent_fraction: f64,
}

impl Default for PlantedPoolConfig {
    fn default() -> Self {
        Self {
            pools: 50,
            pool_size: (10, 16),
            rename_fraction: 0.5,
            silent_fraction: 0.3,
        }
    }
}

/// An anchor file with one TODO method and a candidate file holding exactly
/// one planted equivalent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPool {
    pub name: String,
    pub anchor_file: SynthFile,
    pub candidate_file: SynthFile,
    pub positive: usize,
    pub renamed: bool,
}

/// Replaces one identifier of the centrepiece everywhere in the snippet.
fn rename_one<R: Rng + ?Sized>(slots: &Slots, idiom: &Idiom, rng: &mut R) -> Slots {
    let used = slots_in(idiom.centre);
    let which = *used.choose(rng).expect("every centrepiece has a slot");
    let taken = [&slots.a, &slots.b, &slots.c];
    let fresh = loop {
        let id = identifier(rng);
        if !taken.contains(&&id) {
            break id;
        }
    };
    let mut out = slots.clone();
    match which {
        'a' => out.a = fresh,
        'b' => out.b = fresh,
        _ => out.c = fresh,
    }
    out
}

pub fn generate_planted_pools(cfg: &PlantedPoolConfig, seed: u64) -> Vec<PlantedPool> {
    let renamed_n = (cfg.pools as f64 * cfg.rename_fraction).round() as usize;
    (0..cfg.pools)
        .map(|i| {
            let mut rng = derive_rng(seed, &format!("pool-{i}"));
            let idiom = rng.random_range(0..IDIOMS.len());
            let slots = Slots::random(&mut rng);
            let renamed = i < renamed_n;
            let plant_slots = if renamed {
                rename_one(&slots, &IDIOMS[idiom], &mut rng)
            } else {
                slots.clone()
            };
            let mut names = NameSource(BTreeSet::new());
            let anchor_name = names.next(&mut rng);
            let anchor = MethodSpec::random(
                &mut rng,
                anchor_name,
                Some(IdiomUse {
                    idiom,
                    slots,
                    with_todo: true,
                }),
            );
            let size = rng.random_range(cfg.pool_size.0..=cfg.pool_size.1);
            let avoid: BTreeSet<usize> = [idiom].into();
            let mut uses: Vec<Option<IdiomUse>> = (1..size)
                .map(|_| filler_or_silent(&mut rng, cfg.silent_fraction, &avoid))
                .collect();
            let positive = rng.random_range(0..size);
            uses.insert(
                positive,
                Some(IdiomUse {
                    idiom,
                    slots: plant_slots,
                    with_todo: false,
                }),
            );
            let mut names = NameSource(BTreeSet::new());
            let methods = uses
                .into_iter()
                .map(|u| {
                    let n = names.next(&mut rng);
                    MethodSpec::random(&mut rng, n, u)
                })
                .collect();
            PlantedPool {
                name: format!("pool{i:03}"),
                anchor_file: SynthFile {
                    path: "anchor.py".into(),
                    class_name: class_name(&mut rng),
                    methods: vec![anchor],
                },
                candidate_file: SynthFile {
                    path: "candidates.py".into(),
                    class_name: class_name(&mut rng),
                    methods,
                },
                positive,
                renamed,
            }
        })
        .collect()
}

impl PlantedPool {
    /// Parses both files and cuts the anchor block. The truth line is the
    /// plant's centrepiece line, where the missing TODO belongs.
    pub fn materialize(&self, geom: &BlockGeometry) -> Result<CandidatePool, DatasetError> {
        let opts = ParseOptions::default();
        let anchor_src = self.anchor_file.render(true);
        let todo_lines: Vec<TodoLine> = anchor_src
            .todo_lines
            .iter()
            .map(|(line, text)| TodoLine {
                path: self.anchor_file.path.clone(),
                line: *line,
                text: text.clone(),
            })
            .collect();
        let anchor_x = extract_file(
            &self.name,
            &self.anchor_file.path,
            "synthetic",
            anchor_src.text.as_bytes(),
            &todo_lines,
            &opts,
        );
        let kept = anchor_x.kept.first().ok_or(DatasetError::CorpusExhausted)?;
        let anchor = build_code_block(&kept.method, &kept.todo, geom)?;

        let cand_src = self.candidate_file.render(true);
        let cand_x = extract_file(&self.name, &self.candidate_file.path, "synthetic", cand_src.text.as_bytes(), &[], &opts);
        let truth = &cand_src.methods[self.positive];
        let positive = cand_x
            .methods
            .iter()
            .position(|m| m.qualified_name == truth.qualified_name)
            .ok_or(DatasetError::CorpusExhausted)?;
        Ok(CandidatePool {
            anchor,
            methods: cand_x.methods,
            positive,
            truth_line: truth.centre_line.expect("plant carries the idiom"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableConfig {
    pub universe: usize,
    pub centre_tokens: usize,
    /// Anchor tokens kept by the positive.
    pub shared: usize,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            universe: 300,
            centre_tokens: 10,
            shared: 7,
        }
    }
}

const SEPARABLE_TODOS: &[&str] = &[
    "TODO tidy this up later",
    "TODO revisit this logic soon",
    "TODO make this faster please",
    "TODO handle the edge cases",
];

fn token_line(ids: &[usize]) -> String {
    ids.iter().map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" ")
}

fn plain_block(todo: &str, cen: &[usize], context: &[Vec<usize>], label: String) -> CodeBlock {
    CodeBlock {
        todo_text: todo.to_string(),
        centrepiece: token_line(cen),
        context: context.iter().map(|c| token_line(c)).collect(),
        origin: BlockOrigin {
            project: "separable".into(),
            file: label,
            commit: String::new(),
            method: String::new(),
            centre_line: 1,
            todo_line: None,
        },
    }
}

/// Token-level triplets: the positive keeps `shared` of the anchor's
/// centrepiece tokens, the negative shares none of the anchor's tokens.
pub fn separable_triplets(cfg: &SeparableConfig, n: usize, seed: u64, label: &str) -> Vec<TripletSample> {
    let mut rng = derive_rng(seed, label);
    let universe: Vec<usize> = (0..cfg.universe).collect();
    (0..n)
        .map(|i| {
            let drawn: Vec<usize> = universe.choose_multiple(&mut rng, 4 * cfg.centre_tokens).copied().collect();
            let (anchor_cen, rest) = drawn.split_at(cfg.centre_tokens);
            let (pos_extra, rest) = rest.split_at(cfg.centre_tokens - cfg.shared);
            let (neg_cen, anchor_ctx) = rest.split_at(cfg.centre_tokens);
            let mut pos_cen: Vec<usize> = anchor_cen[..cfg.shared].to_vec();
            pos_cen.extend_from_slice(pos_extra);
            pos_cen.shuffle(&mut rng);
            let ctx = vec![anchor_ctx[..anchor_ctx.len() / 2].to_vec()];
            let todo = SEPARABLE_TODOS.choose(&mut rng).expect("todos");
            TripletSample {
                group_id: format!("{label}-{i}"),
                project: "separable".into(),
                anchor: plain_block(todo, anchor_cen, &ctx, format!("{label}-{i}-a")),
                positive: plain_block(todo, &pos_cen, &ctx, format!("{label}-{i}-p")),
                negative: plain_block(todo, neg_cen, &[], format!("{label}-{i}-n")),
            }
        })
        .collect()
}
