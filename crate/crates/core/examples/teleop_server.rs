//! Starts the teleop server for a few seconds and drives it from an
//! in-process client over TCP, printing the telemetry that comes back.
//!
//! With `--wait` it serves the upright robot until Ctrl-C so an external
//! client (`nc 127.0.0.1 7878`, or a browser on the WebSocket port) can
//! steer it.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use balancebot::sim::ScenarioConfig;
use balancebot::teleop::{LinkConfig, ServeOptions, Server};

fn main() -> balancebot::Result<()> {
    let interactive = std::env::args().any(|a| a == "--wait");
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default.cfg");
    let scenario = ScenarioConfig::from_file(path)?;

    let server = Server::bind(ServeOptions {
        listen: if interactive { "127.0.0.1:7878" } else { "127.0.0.1:0" }.into(),
        ws_listen: Some(if interactive { "127.0.0.1:7879" } else { "127.0.0.1:0" }.into()),
        link: LinkConfig::default(),
        duration: if interactive { None } else { Some(4.0) },
        ..Default::default()
    })?;
    let addr = server.local_addr()?;
    println!("tcp {addr}, websocket {}", server.ws_addr().map_or("-".into(), |a| a.to_string()));

    if interactive {
        let stop = server.shutdown_handle();
        ctrlc::set_handler(move || stop.store(true, std::sync::atomic::Ordering::Relaxed))
            .expect("interrupt handler");
        let summary = server.run(scenario)?;
        print!("{}", summary.metrics);
        return Ok(());
    }

    let sim = thread::spawn(move || server.run(scenario));

    let mut conn = TcpStream::connect(addr)?;
    let mut lines = BufReader::new(conn.try_clone()?).lines();
    let plan = [(0.0, "T 4"), (1.5, "F"), (2.5, "L"), (3.0, "S"), (3.2, "bogus")];
    let mut elapsed = 0.0;
    for (at, frame) in plan {
        thread::sleep(Duration::from_secs_f64(at - elapsed));
        elapsed = at;
        println!(">> {frame}");
        writeln!(conn, "{frame}")?;
        if let Some(Ok(line)) = lines.next() {
            println!("<< {line}");
        }
    }
    for line in lines.map_while(Result::ok).take(3) {
        println!("<< {line}");
    }
    drop(conn);

    let summary = sim.join().expect("simulation thread")?;
    for a in &summary.applied {
        println!("applied {} at t={:.2}", a.command, a.t);
    }
    print!("{}", summary.metrics);
    Ok(())
}
