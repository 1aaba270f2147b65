//! Execution files: a `# meta:` line, a channel header, then one row of
//! decimal values per timestep.

use std::fmt::Write as _;
use std::path::Path;

use super::execution::{Execution, Label, Layout};
use crate::error::{Error, Result};
use crate::nn::Matrix;

fn meta_value(v: &str) -> Result<()> {
    if v.is_empty() || v.contains([',', '=', '\n', '\r']) || v.trim() != v {
        return Err(Error::Contract(format!("metadata value '{v}' cannot be written")));
    }
    Ok(())
}

pub fn execution_to_string(e: &Execution) -> Result<String> {
    e.validate()?;
    meta_value(&e.id)?;
    meta_value(&e.group)?;
    let ty = e.anomaly_type.as_deref().unwrap_or("-");
    meta_value(ty)?;
    let onset = e.onset.map_or_else(|| "-".to_string(), |o| o.to_string());
    let mut out = format!(
        "# meta: id={}, group={}, label={}, type={}, onset={}, rate_hz={:?}\n",
        e.id, e.group, e.label, ty, onset, e.rate_hz
    );
    out.push_str(&e.layout.channels().join(","));
    out.push('\n');
    for row in e.signals.iter_rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").expect("writing to a string");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_execution(text: &str) -> Result<Execution> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (n, meta) = lines.next().ok_or_else(|| Error::parse(1, "missing metadata line"))?;
    let body = meta
        .strip_prefix("# meta:")
        .ok_or_else(|| Error::parse(n, "first line must start with '# meta:'"))?;

    let (mut id, mut group, mut label, mut ty, mut onset, mut rate) = (None, None, None, None, None, None);
    for field in body.split(',') {
        let field = field.trim();
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(n, format!("metadata field '{field}' is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let slot = match key {
            "id" => &mut id,
            "group" => &mut group,
            "label" => &mut label,
            "type" => &mut ty,
            "onset" => &mut onset,
            "rate_hz" => &mut rate,
            other => return Err(Error::parse(n, format!("unknown metadata key '{other}'"))),
        };
        if slot.replace(value.to_string()).is_some() {
            return Err(Error::parse(n, format!("duplicate metadata key '{key}'")));
        }
    }
    let need = |v: Option<String>, key: &str| v.ok_or_else(|| Error::parse(n, format!("missing metadata key '{key}'")));
    let id = need(id, "id")?;
    let group = need(group, "group")?;
    let label: Label = need(label, "label")?
        .parse()
        .map_err(|e: Error| Error::parse(n, e.to_string()))?;
    let ty = need(ty, "type")?;
    let anomaly_type = (ty != "-").then_some(ty);
    let onset = match need(onset, "onset")?.as_str() {
        "-" => None,
        s => Some(
            s.parse::<usize>()
                .map_err(|_| Error::parse(n, format!("onset '{s}' is not a non-negative integer")))?,
        ),
    };
    let rate_text = need(rate, "rate_hz")?;
    let rate_hz: f64 = rate_text
        .parse()
        .map_err(|_| Error::parse(n, format!("rate_hz '{rate_text}' is not a number")))?;

    let (n, header) = lines.next().ok_or_else(|| Error::parse(2, "missing channel header"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let layout = Layout::detect(&names).ok_or_else(|| {
        Error::parse(
            n,
            format!("unknown channel layout with {} columns: {}", names.len(), header),
        )
    })?;

    let dim = layout.dim();
    let mut data = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(n, format!("'{}' is not a number", cell.trim())))?;
            if !v.is_finite() {
                return Err(Error::parse(n, "non-finite value"));
            }
            data.push(v);
            count += 1;
        }
        if count != dim {
            return Err(Error::parse(n, format!("expected {dim} values, found {count}")));
        }
        rows += 1;
    }
    let exec = Execution {
        id,
        group,
        layout,
        signals: Matrix::from_vec(rows, dim, data)?,
        rate_hz,
        label,
        anomaly_type,
        onset,
    };
    exec.validate()?;
    Ok(exec)
}

pub fn load_execution(path: impl AsRef<Path>) -> Result<Execution> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_execution(&text)
}

pub fn save_execution(e: &Execution, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = execution_to_string(e)?;
    std::fs::write(path, text).map_err(|err| Error::file(path, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Execution {
        let data = (0..3 * 4).map(|i| i as f64 * 0.1 + 1e-17).collect();
        Execution {
            id: "e1".into(),
            group: "g0".into(),
            layout: Layout::Features4,
            signals: Matrix::from_vec(3, 4, data).unwrap(),
            rate_hz: 20.0,
            label: Label::Anomalous,
            anomaly_type: Some("force_bump".into()),
            onset: Some(1),
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let e = sample();
        let text = execution_to_string(&e).unwrap();
        assert!(text.starts_with("# meta: id=e1, group=g0, label=anomalous, type=force_bump, onset=1, rate_hz=20.0\n"));
        assert_eq!(parse_execution(&text).unwrap(), e);
    }

    #[test]
    fn anomalous_without_onset_is_rejected() {
        let text = "# meta: id=a, group=g, label=anomalous, type=x, onset=-, rate_hz=20\n\
                    sound_energy,torque_1,accumulated_force,spoon_mouth_distance\n1,2,3,4\n";
        assert!(matches!(parse_execution(text), Err(Error::Contract(_))));
    }

    #[test]
    fn short_rows_report_their_line() {
        let mut header = RAW_HEADER.to_string();
        header.push('\n');
        let row16 = vec!["0.5"; 16].join(",");
        let text = format!("# meta: id=a, group=g, label=non_anomalous, type=-, onset=-, rate_hz=20\n{header}{row16}\n");
        match parse_execution(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    const RAW_HEADER: &str = "sound_energy,force_x,force_y,force_z,torque_1,torque_2,torque_3,torque_4,torque_5,torque_6,torque_7,spoon_x,spoon_y,spoon_z,mouth_x,mouth_y,mouth_z";

    #[test]
    fn malformed_headers_are_parse_errors() {
        for text in [
            "",
            "id=a\n",
            "# meta: id=a, group=g, label=maybe, type=-, onset=-, rate_hz=20\nsound_energy\n",
            "# meta: id=a, group=g, label=non_anomalous, type=-, onset=-, rate_hz=20\nfoo,bar\n",
            "# meta: id=a, group=g, label=non_anomalous, type=-, onset=-\n",
        ] {
            assert!(matches!(parse_execution(text), Err(Error::Parse { .. })), "{text:?}");
        }
    }
}
