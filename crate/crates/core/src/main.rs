use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Arg, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use docparse::assemble::write_outputs;
use docparse::config::{apply_override, load_config, setting_names};
use docparse::layout::load_layout;
use docparse::metrics::evaluate_corpus;
use docparse::mock::{Fallback, MockRecognizer};
use docparse::otsl::{grid_to_html, html_to_grid, parse_otsl_text};
use docparse::pipeline::{Pipeline, PipelineConfig, ProgressSink};
use docparse::reading_order::{
    decode_reading_order, geometric_relation_scores, is_consistent_tournament, load_relation_matrix,
};
use docparse::recognizer::HttpRecognizer;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (output schema 1.0)");

#[derive(Parser)]
#[command(name = "docparse", version = VERSION, about = "Parse page images into Markdown and JSON")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse documents (page-image directories, images or PDFs).
    Parse {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory for <name>.md, <name>.json and figure images.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// JSON configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Serve canned responses from a loopback mock recognizer.
        #[arg(long)]
        mock_recognizer: bool,
        /// Write JSON-lines progress records here ("-" for stderr).
        #[arg(long)]
        progress_log: Option<PathBuf>,
    },
    /// Score predictions listed in a JSON-lines manifest.
    Eval {
        manifest: PathBuf,
        #[arg(long, default_value = "eval_report.json")]
        report: PathBuf,
    },
    /// Print the reading order of a layout fixture.
    Order {
        layout: PathBuf,
        /// Relation-score fixture used instead of the geometric scorer.
        #[arg(long)]
        relations: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        column_overlap_threshold: f64,
    },
    /// Convert OTSL text to canonical HTML.
    Otsl2html {
        input: PathBuf,
        output: Option<PathBuf>,
    },
    /// Convert an HTML table to OTSL text.
    Html2otsl {
        input: PathBuf,
        output: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Input(String),
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Input(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match path {
        Some(p) if p != Path::new("-") => {
            fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))
        }
        _ => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Input(format!("stdout: {e}"))),
    }
}

fn build_config(config: Option<&Path>, overrides: &ArgMatches) -> Result<PipelineConfig, Failure> {
    let mut cfg = match config {
        Some(p) => load_config(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    cfg.service
        .apply_env(|k| std::env::var(k).ok())
        .map_err(Failure::Usage)?;
    for name in setting_names() {
        if let Some(v) = overrides.get_one::<String>(&name) {
            apply_override(&mut cfg, &name, v).map_err(|e| Failure::Usage(e.to_string()))?;
        }
    }
    Ok(cfg)
}

fn parse_command(
    inputs: &[PathBuf],
    out: &Path,
    config: Option<&Path>,
    mock: bool,
    progress_log: Option<&Path>,
    overrides: &ArgMatches,
) -> Result<(), Failure> {
    let mut cfg = build_config(config, overrides)?;
    cfg.service.validate().map_err(Failure::Usage)?;

    let _server = if mock {
        let mut recognizer = MockRecognizer::new(Fallback::Describe);
        for input in inputs.iter().filter(|p| p.join("responses.json").is_file()) {
            recognizer
                .load_fixture_dir(input, cfg.pipeline.crop_padding)
                .map_err(|e| Failure::Usage(e.to_string()))?;
        }
        let server = Arc::new(recognizer)
            .serve()
            .map_err(|e| Failure::Usage(e.to_string()))?;
        cfg.service.endpoint = server.endpoint();
        Some(server)
    } else {
        None
    };

    let recognizer = Arc::new(HttpRecognizer::new(cfg.service.clone()));
    let mut pipeline = Pipeline::new(cfg.clone(), recognizer);
    if let Some(p) = progress_log {
        let sink: ProgressSink = if p == Path::new("-") {
            Arc::new(Mutex::new(io::stderr()))
        } else {
            let f = fs::File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Arc::new(Mutex::new(io::BufWriter::new(f)))
        };
        pipeline = pipeline.with_progress(sink);
    }
    let output = pipeline.run(inputs).map_err(|e| Failure::Usage(e.to_string()))?;

    let mut failed = 0;
    for (input, result) in inputs.iter().zip(&output.documents) {
        match result {
            Ok(doc) => {
                if let Err(e) = write_outputs(out, &doc.name, &doc.document, &doc.figures, &cfg.assembly) {
                    eprintln!("error: {}: writing outputs: {e}", input.display());
                    failed += 1;
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Input(format!("{failed} of {} inputs failed", inputs.len())));
    }
    Ok(())
}

fn order_command(layout: &Path, relations: Option<&Path>, overlap: f64) -> Result<(), Failure> {
    let pages = load_layout(layout).map_err(|e| Failure::Input(e.to_string()))?;
    if relations.is_some() && pages.len() != 1 {
        return Err(Failure::Input(format!(
            "a relation fixture needs a single-page layout, {} has {} pages",
            layout.display(),
            pages.len()
        )));
    }
    let mut stdout = io::stdout().lock();
    let mut empty = false;
    for page in &pages {
        if page.elements.is_empty() {
            empty = true;
            continue;
        }
        let matrix = match relations {
            Some(r) => load_relation_matrix(r),
            None => geometric_relation_scores(&page.elements, overlap),
        }
        .map_err(|e| Failure::Input(e.to_string()))?;
        if !is_consistent_tournament(&matrix) {
            eprintln!("warning: inconsistent tournament on page {}", page.page_index);
        }
        let result = decode_reading_order(&matrix, &page.elements).map_err(|e| Failure::Input(e.to_string()))?;
        for (k, &i) in result.permutation.iter().enumerate() {
            let e = &page.elements[i];
            let [x0, y0, x1, y1] = e.bbox.to_array();
            writeln!(
                stdout,
                "{}\t{}\t{}\t{}\t[{x0:.2}, {y0:.2}, {x1:.2}, {y1:.2}]\t{}",
                page.page_index, k, e.id, e.category, result.win_counts[i]
            )
            .map_err(|e| Failure::Input(e.to_string()))?;
        }
    }
    if empty || pages.is_empty() {
        return Err(Failure::Input("empty page".into()));
    }
    Ok(())
}

fn run(cli: Cli, matches: &ArgMatches) -> Result<(), Failure> {
    match cli.command {
        Command::Parse {
            inputs,
            out,
            config,
            mock_recognizer,
            progress_log,
        } => {
            let sub = matches.subcommand_matches("parse").expect("parse matches");
            parse_command(&inputs, &out, config.as_deref(), mock_recognizer, progress_log.as_deref(), sub)
        }
        Command::Eval { manifest, report } => {
            let r = evaluate_corpus(&manifest).map_err(|e| Failure::Input(e.to_string()))?;
            fs::write(&report, r.to_json()).map_err(|e| Failure::Input(format!("{}: {e}", report.display())))?;
            if r.errored > 0 {
                eprintln!("warning: {} samples could not be scored", r.errored);
            }
            println!("{}", report.display());
            Ok(())
        }
        Command::Order {
            layout,
            relations,
            column_overlap_threshold,
        } => order_command(&layout, relations.as_deref(), column_overlap_threshold),
        Command::Otsl2html { input, output } => {
            let grid = parse_otsl_text(&read_input(&input)?).map_err(|e| Failure::Input(e.to_string()))?;
            write_output(output.as_deref(), &grid_to_html(&grid))
        }
        Command::Html2otsl { input, output } => {
            let grid = html_to_grid(&read_input(&input)?).map_err(|e| Failure::Input(e.to_string()))?;
            write_output(output.as_deref(), &grid.to_otsl_string())
        }
    }
}

fn main() -> ExitCode {
    let cmd = Cli::command().mut_subcommand("parse", |mut sc| {
        for name in setting_names() {
            sc = sc.arg(
                Arg::new(name.clone())
                    .long(name)
                    .value_name("VALUE")
                    .help_heading("Setting overrides"),
            );
        }
        sc
    });
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
