//! In-process completion server for tests.
//!
//! Speaks just enough HTTP/1.1 for the client: one request per
//! connection, `Content-Length` bodies, `Connection: close` replies.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use crate::fewshot::{CompletionRequest, CompletionResponse};

/// Status code and JSON body to send back.
pub type Reply = (u16, String);

type Handler = dyn Fn(&CompletionRequest) -> Reply + Send + Sync;

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<CompletionRequest>>>,
    accept: Option<thread::JoinHandle<()>>,
}

impl MockServer {
    /// Starts a server answering every request with `handler`.
    pub fn start<F>(handler: F) -> std::io::Result<Self>
    where
        F: Fn(&CompletionRequest) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let accept = {
            let stop = stop.clone();
            let requests = requests.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = handler.clone();
                    let requests = requests.clone();
                    thread::spawn(move || {
                        let _ = serve(stream, &*handler, &requests);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            requests,
            accept: Some(accept),
        })
    }

    /// Server that completes every prompt with `text`.
    pub fn constant(text: &str) -> std::io::Result<Self> {
        let body = serde_json::to_string(&CompletionResponse::single(text)).expect("serializes");
        Self::start(move |_| (200, body.clone()))
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().expect("lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop so it sees the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve(
    stream: TcpStream,
    handler: &Handler,
    requests: &Mutex<Vec<CompletionRequest>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            break;
        }
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, reply) = match serde_json::from_slice::<CompletionRequest>(&body) {
        Ok(req) => {
            let reply = handler(&req);
            requests.lock().expect("lock").push(req);
            reply
        }
        Err(e) => (400, format!("{{\"error\":{:?}}}", e.to_string())),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reason(status),
        reply.len()
    )?;
    stream.flush()
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

/// Synthetic NI corpora and a matching deterministic responder.
///
/// Every instance input starts with `t=<task> i=<index>` followed by
/// filler words. The gold output is a function of the input alone, so the
/// responder can grade itself without seeing the corpus: exact-match tasks
/// are answered correctly at a task-specific rate, generation tasks get a
/// prefix of the gold text whose length varies per prompt.
pub mod synthetic {
    use std::fmt::Write as _;
    use std::path::Path;

    use serde_json::json;

    use crate::assembler::MixtureComponent;
    use crate::fewshot::{CompletionRequest, CompletionResponse, CompletionTransport, TransportError};
    use crate::hashing::derive_seed;

    const WORDS: [&str; 12] = [
        "amber", "birch", "cedar", "delta", "ember", "fjord", "grove", "harbor", "islet",
        "juniper", "kelp", "lagoon",
    ];

    pub fn em_task_id(t: usize) -> String {
        format!("task{t:03}_synthetic_classification")
    }

    pub fn gen_task_id(t: usize) -> String {
        format!("task{t:03}_synthetic_rewriting")
    }

    fn h(parts: &[&str]) -> u64 {
        derive_seed(0x5eed, parts)
    }

    fn input_for(task: usize, i: usize) -> String {
        let mut s = format!("t={task} i={i}");
        let n = 6 + (h(&["len", &task.to_string(), &i.to_string()]) % 6) as usize;
        for w in 0..n {
            let k = h(&["w", &task.to_string(), &i.to_string(), &w.to_string()]) % WORDS.len() as u64;
            s.push(' ');
            s.push_str(WORDS[k as usize]);
        }
        s
    }

    fn task_of(input: &str) -> Option<usize> {
        input.strip_prefix("t=")?.split(' ').next()?.parse().ok()
    }

    /// Gold output of an instance input. Tasks numbered below 500 are
    /// exact-match classification, the rest are generation.
    pub fn gold_for(input: &str) -> String {
        match task_of(input) {
            Some(t) if t < 500 => if h(&["label", input]).is_multiple_of(2) { "yes" } else { "no" }.into(),
            _ => {
                let mut words: Vec<&str> = input.split(' ').skip(2).collect();
                words.reverse();
                words.join(" ")
            }
        }
    }

    fn task_json(task: usize, n_instances: usize) -> String {
        let em = task < 500;
        let positives: Vec<_> = (0..3)
            .map(|p| {
                let input = input_for(task, 100_000 + p);
                json!({"input": input, "output": gold_for(&input), "explanation": "worked example"})
            })
            .collect();
        let instances: Vec<_> = (0..n_instances)
            .map(|i| {
                let input = input_for(task, i);
                json!({"id": format!("t{task}-{i}"), "input": input, "output": [gold_for(&input)]})
            })
            .collect();
        let doc = json!({
            "Definition": [if em {
                "Answer yes or no for the given word list."
            } else {
                "Write the given words in reverse order."
            }],
            "Categories": [if em { "Text Categorization" } else { "Text Rewriting" }],
            "Domains": ["Synthetic"],
            "Input_language": ["English"],
            "Output_language": ["English"],
            "Positive Examples": positives,
            "Instances": instances,
        });
        serde_json::to_string_pretty(&doc).expect("task serializes")
    }

    /// Writes `n_em` exact-match and `n_gen` generation tasks into `dir`
    /// and returns the matching category map text.
    pub fn write_corpus(dir: &Path, n_em: usize, n_gen: usize, n_instances: usize) -> std::io::Result<String> {
        std::fs::create_dir_all(dir)?;
        let mut map = String::new();
        for t in 0..n_em {
            std::fs::write(dir.join(format!("{}.json", em_task_id(t))), task_json(t, n_instances))?;
            writeln!(map, "{}\tEM", em_task_id(t)).expect("string write");
        }
        for t in 500..500 + n_gen {
            std::fs::write(dir.join(format!("{}.json", gen_task_id(t))), task_json(t, n_instances))?;
            writeln!(map, "{}\tGEN", gen_task_id(t)).expect("string write");
        }
        Ok(map)
    }

    /// Deterministic completion for a few-shot prompt built from a
    /// synthetic corpus.
    pub fn respond(prompt: &str) -> String {
        let target = prompt
            .rsplit("Input: ")
            .next()
            .and_then(|s| s.strip_suffix("\nOutput:"))
            .unwrap_or("");
        let gold = gold_for(target);
        let roll = h(&["reply", prompt]);
        match task_of(target) {
            Some(t) if t < 500 => {
                let accuracy = (t as u64 * 37) % 100;
                if roll % 100 < accuracy {
                    format!(" {gold}\n\nInput: trailing")
                } else if gold == "yes" {
                    " no".into()
                } else {
                    " yes".into()
                }
            }
            _ => {
                let words: Vec<&str> = gold.split(' ').collect();
                let keep = (roll % (words.len() as u64 + 1)) as usize;
                format!(" {}", words[..keep].join(" "))
            }
        }
    }

    /// In-process transport answering with [`respond`].
    #[derive(Debug, Clone, Copy, Default)]
    pub struct SyntheticTransport;

    impl CompletionTransport for SyntheticTransport {
        fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
            Ok(CompletionResponse::single(respond(&request.prompt)))
        }
    }

    /// Writes a JSONL file of `n` records for every non-NI component plus a
    /// sources file naming them; returns the sources file path. QUAC records
    /// use their own field names to exercise the mapping.
    pub fn write_sources(dir: &Path, n: usize) -> std::io::Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut sources = String::new();
        for comp in MixtureComponent::ALL {
            if matches!(comp, MixtureComponent::NiExactMatch | MixtureComponent::NiGeneration) {
                continue;
            }
            let name = comp.as_str().to_ascii_lowercase();
            let quac = comp == MixtureComponent::Quac;
            let mut body = String::new();
            for i in 0..n {
                let rec = if quac {
                    json!({"question": format!("{name} question {i}"), "context": format!("passage {i}"), "answer": format!("answer {i}")})
                } else {
                    json!({"instruction": format!("{name} instruction {i}"), "input": "", "output": format!("{name} response {i}")})
                };
                body.push_str(&rec.to_string());
                body.push('\n');
            }
            std::fs::write(dir.join(format!("{name}.jsonl")), body)?;
            writeln!(sources, "[[source]]\ncomponent = \"{}\"\npath = \"{name}.jsonl\"", comp.as_str())
                .expect("string write");
            if quac {
                sources.push_str("instruction = \"question\"\ninput = \"context\"\noutput = \"answer\"\n");
            } else {
                sources.push_str("input = \"input\"\n");
            }
            sources.push('\n');
        }
        let path = dir.join("sources.toml");
        std::fs::write(&path, sources)?;
        Ok(path)
    }
}
