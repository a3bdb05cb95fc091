use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::{IntersectionControl, Network, RunResult, SimError, VehicleResult, VehicleSpec};
use crate::signal::{default_head_map, emit_tls_program};

/// How to launch the external simulator. The command template goes through
/// `sh -c` after `${config}` and `${output}` are replaced by the scenario
/// config path and the expected trip-info path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRun {
    pub command_template: String,
    pub workdir: PathBuf,
    pub timeout_s: f64,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

/// Vehicles with their departure time and the link ids of their route.
pub fn write_routes_xml(network: &Network, vehicles: &[VehicleSpec]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<routes>\n");
    for v in vehicles {
        let edges = network.route_edges(&v.route).join(" ");
        writeln!(
            out,
            "    <vehicle id=\"{}\" depart=\"{}\" speedFactor=\"{}\">\n        <route edges=\"{}\"/>\n    </vehicle>",
            escape(v.id.as_str()),
            v.depart,
            v.speed_factor,
            escape(edges.as_str())
        )
        .unwrap();
    }
    out.push_str("</routes>\n");
    out
}

fn attr_f64(name: &str, value: &str) -> Result<f64, SimError> {
    value.parse().map_err(|_| SimError::Parse(format!("attribute {name}={value:?} is not a number")))
}

/// Reads `<tripinfo>` elements. `id`, `depart`, `arrival` and `duration` are
/// required; `waitingCount` and `timeLoss` fill stops and delay when present
/// and every other attribute is ignored.
pub fn parse_tripinfo(xml: &str) -> Result<Vec<VehicleResult>, SimError> {
    let mut reader = Reader::from_str(xml);
    let mut out = Vec::new();
    loop {
        match reader.read_event().map_err(|e| SimError::Parse(e.to_string()))? {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"tripinfo" => {
                let (mut id, mut depart, mut arrival, mut duration) = (None, None, None, None);
                let (mut stops, mut delay) = (0u32, 0.0);
                for attr in e.attributes() {
                    let attr = attr.map_err(|e| SimError::Parse(e.to_string()))?;
                    let value = attr.unescape_value().map_err(|e| SimError::Parse(e.to_string()))?;
                    match attr.key.as_ref() {
                        b"id" => id = Some(value.into_owned()),
                        b"depart" => depart = Some(attr_f64("depart", &value)?),
                        b"arrival" => arrival = Some(attr_f64("arrival", &value)?),
                        b"duration" => duration = Some(attr_f64("duration", &value)?),
                        b"waitingCount" => {
                            stops = value.parse().map_err(|_| SimError::Parse(format!("waitingCount {value:?}")))?
                        }
                        b"timeLoss" => delay = attr_f64("timeLoss", &value)?,
                        _ => {}
                    }
                }
                match (id, depart, arrival, duration) {
                    (Some(id), Some(depart), Some(arrive), Some(travel_time)) => out.push(VehicleResult {
                        id,
                        depart,
                        arrive: Some(arrive),
                        travel_time: Some(travel_time),
                        stops,
                        delay,
                    }),
                    _ => return Err(SimError::Parse("tripinfo lacks id, depart, arrival or duration".into())),
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

/// Writes the scenario files into `run.workdir`, launches the external
/// command and converts its trip-info output into a [`RunResult`]. Vehicles
/// that never show up in the trip-info file count as incomplete.
pub fn run_external(
    scenario_id: &str,
    network: &Network,
    controls: &BTreeMap<String, IntersectionControl>,
    vehicles: &[VehicleSpec],
    run: &ExternalRun,
) -> Result<RunResult, SimError> {
    if !run.command_template.contains("${config}") || !run.command_template.contains("${output}") {
        return Err(SimError::Params("command template needs ${config} and ${output} placeholders".into()));
    }
    if !(run.timeout_s > 0.0) {
        return Err(SimError::Params(format!("timeout must be positive, got {}", run.timeout_s)));
    }
    let dir = &run.workdir;
    fs::create_dir_all(dir).map_err(io(dir))?;
    let write = |name: &str, body: &str| -> Result<PathBuf, SimError> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io(&p))?;
        Ok(p)
    };
    let routes = write("routes.xml", &write_routes_xml(network, vehicles))?;
    let mut tls = Vec::new();
    for i in &network.intersections {
        let c = controls.get(i).ok_or_else(|| SimError::MissingTimeline(i.clone()))?;
        let xml = emit_tls_program(&c.timeline, &default_head_map(), i, "0", c.offset)
            .map_err(|e| SimError::Params(format!("intersection {i:?}: {e}")))?;
        tls.push(write(&format!("tls_{}.xml", sanitize(i)), &xml)?);
    }
    let net = write("network.json", &serde_json::to_string_pretty(network).expect("network serializes"))?;
    let output = dir.join("tripinfo.xml");
    let config = serde_json::json!({
        "scenario_id": scenario_id,
        "network": net,
        "routes": routes,
        "tls": tls,
        "output": output,
    });
    let config_path = write("config.json", &serde_json::to_string_pretty(&config).expect("config serializes"))?;

    let cmd = run
        .command_template
        .replace("${config}", &config_path.to_string_lossy())
        .replace("${output}", &output.to_string_lossy());
    let stdout_path = dir.join("stdout.log");
    let stderr_path = dir.join("stderr.log");
    let stdout = fs::File::create(&stdout_path).map_err(io(&stdout_path))?;
    let stderr = fs::File::create(&stderr_path).map_err(io(&stderr_path))?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(io(dir))?;
    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait().map_err(io(dir))? {
            break status;
        }
        if started.elapsed().as_secs_f64() > run.timeout_s {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SimError::Timeout(run.timeout_s));
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    if !status.success() {
        let mut captured = fs::read_to_string(&stdout_path).unwrap_or_default();
        captured.push_str(&fs::read_to_string(&stderr_path).unwrap_or_default());
        return Err(SimError::Backend { code: status.code(), output: captured });
    }
    let xml = fs::read_to_string(&output).map_err(io(&output))?;
    let mut rows = parse_tripinfo(&xml)?;
    let reported: BTreeSet<String> = rows.iter().map(|r| r.id.clone()).collect();
    for v in vehicles.iter().filter(|v| !reported.contains(&v.id)) {
        rows.push(VehicleResult { id: v.id.clone(), depart: v.depart, arrive: None, travel_time: None, stops: 0, delay: 0.0 });
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let corridor: Option<BTreeSet<String>> = (!network.corridor_routes.is_empty()).then(|| {
        vehicles.iter().filter(|v| network.corridor_routes.contains(&v.route_name)).map(|v| v.id.clone()).collect()
    });
    Ok(RunResult::from_vehicles(scenario_id, rows, corridor.as_ref(), BTreeMap::new()))
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
