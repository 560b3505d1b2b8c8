#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use deco::config::PipelineConfig;
use deco::io::{write_flow, write_frames, write_mask_dir, BitDepth};
use deco_core::atlas::{AtlasConfig, TranslatingCheckerboard, VideoClip};
use deco_core::image::{Image, Mask};

/// Request seen by a [`MockServer`] handler.
pub struct Request {
    pub path: String,
    pub body: Vec<u8>,
}

type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on a loopback port; one request per connection.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&Request) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let (h, s) = (hits.clone(), stop.clone());
        let thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                h.fetch_add(1, Ordering::SeqCst);
                let handler = handler.clone();
                std::thread::spawn(move || serve(stream, handler.as_ref()));
            }
        });
        Self {
            url: format!("http://{addr}/"),
            hits,
            stop,
            addr,
            thread: Some(thread),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let (mut length, mut chunked) = (0usize, false);
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let lower = h.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
        if lower.starts_with("transfer-encoding:") && lower.contains("chunked") {
            chunked = true;
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            let mut size = String::new();
            reader.read_line(&mut size).unwrap();
            let n = usize::from_str_radix(size.trim().split(';').next().unwrap(), 16).unwrap();
            let mut chunk = vec![0; n + 2];
            reader.read_exact(&mut chunk).unwrap();
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }
    } else {
        body.resize(length, 0);
        reader.read_exact(&mut body).unwrap();
    }
    let (status, text) = handler(&Request { path, body });
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

pub fn board(width: usize, height: usize, frames: usize) -> TranslatingCheckerboard {
    TranslatingCheckerboard {
        width,
        height,
        frames,
        ..TranslatingCheckerboard::default()
    }
}

/// Rectangle of `w × h` pixels at `(x0 + f, y0)` in frame `f`.
pub fn moving_masks(width: usize, height: usize, frames: usize, rect: [usize; 4]) -> Vec<Mask> {
    let [x0, y0, w, h] = rect;
    (0..frames)
        .map(|f| Mask::from_fn(width, height, |x, y| x >= x0 + f && x < x0 + f + w && y >= y0 && y < y0 + h))
        .collect()
}

/// Quantizes to 8 bits, as the clip is stored on disk.
pub fn quantize8(img: &Image) -> Image {
    img.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

/// Synthetic clip written to `<root>/frames` (8-bit), `<root>/masks` and
/// `<root>/flow.json`.
pub struct ClipFixture {
    pub root: PathBuf,
    pub clip: VideoClip,
    pub masks: Vec<Mask>,
}

impl ClipFixture {
    pub fn write(root: &Path, width: usize, height: usize, frames: usize) -> Self {
        let clip = board(width, height, frames).clip();
        let frames_q: Vec<Image> = clip.frames.iter().map(quantize8).collect();
        write_frames(&root.join("frames"), &frames_q, BitDepth::Eight).unwrap();
        let masks = moving_masks(width, height, frames, [width / 3, height / 4, width / 4, height / 2]);
        write_mask_dir(&root.join("masks"), &masks).unwrap();
        write_flow(&root.join("flow.json"), clip.flow.as_ref().unwrap()).unwrap();
        let clip = VideoClip {
            frames: frames_q,
            ..clip
        };
        Self {
            root: root.to_path_buf(),
            clip,
            masks,
        }
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.root.join("frames")
    }

    pub fn masks_dir(&self) -> PathBuf {
        self.root.join("masks")
    }
}

/// Small, fast atlas network for pipeline tests.
pub fn tiny_atlas() -> AtlasConfig {
    AtlasConfig {
        hidden_layers: 2,
        hidden_units: 24,
        frequencies: 3,
        batch: 128,
        ..AtlasConfig::default()
    }
}

/// Configuration with every stage off, pointing at the fixture.
pub fn base_config(fx: &ClipFixture, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.frames = Some(fx.frames_dir());
    cfg.paths.output = Some(out.to_path_buf());
    cfg.paths.cache = Some(out.join("cache"));
    cfg.stages.edit_human = false;
    cfg.stages.edit_background = false;
    cfg.stages.allow_passthrough = true;
    cfg.atlas.iters = 40;
    cfg.atlas.size = (48, 40);
    cfg.atlas.network = tiny_atlas();
    cfg
}
