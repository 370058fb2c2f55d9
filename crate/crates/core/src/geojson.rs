//! Minimal GeoJSON polygon ingestion.
//!
//! Only `Polygon` and `MultiPolygon` features are read. Coordinates must be
//! projected meters; a collection whose `crs` member names a geographic CRS
//! is refused.

use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{GeometryError, MultiPolygon, Point, Polygon};

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: declared CRS {crs} is geographic; coordinates must be projected meters")]
    GeographicCrs { path: String, crs: String },
    #[error("{path}: feature {id}: {source}")]
    Geometry {
        path: String,
        id: String,
        #[source]
        source: GeometryError,
    },
}

#[derive(Debug, Clone)]
pub struct Feature {
    pub id: String,
    pub geometry: MultiPolygon,
    pub properties: Map<String, Value>,
}

impl Feature {
    pub fn property_str(&self, key: &str) -> Option<String> {
        match self.properties.get(key)? {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }
}

const GEOGRAPHIC_MARKERS: [&str; 4] = ["CRS84", "EPSG::4326", "EPSG:4326", "EPSG::4269"];

pub fn read_features(path: &Path, id_property: &str) -> Result<Vec<Feature>, GeoJsonError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| GeoJsonError::Io {
        path: p.clone(),
        source,
    })?;
    let root: Value = serde_json::from_str(&text).map_err(|source| GeoJsonError::Json {
        path: p.clone(),
        source,
    })?;
    parse_collection(&root, id_property).map_err(|e| match e {
        ParseError::Schema(message) => GeoJsonError::Schema { path: p, message },
        ParseError::Crs(crs) => GeoJsonError::GeographicCrs { path: p, crs },
        ParseError::Geometry(id, source) => GeoJsonError::Geometry { path: p, id, source },
    })
}

enum ParseError {
    Schema(String),
    Crs(String),
    Geometry(String, GeometryError),
}

fn schema<T>(msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Schema(msg.into()))
}

fn parse_collection(root: &Value, id_property: &str) -> Result<Vec<Feature>, ParseError> {
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return schema("top-level object must be a FeatureCollection");
    }
    if let Some(name) = root
        .pointer("/crs/properties/name")
        .and_then(Value::as_str)
    {
        if GEOGRAPHIC_MARKERS.iter().any(|m| name.contains(m)) {
            return Err(ParseError::Crs(name.to_string()));
        }
    }
    let Some(features) = root.get("features").and_then(Value::as_array) else {
        return schema("missing features array");
    };
    let mut out = Vec::with_capacity(features.len());
    for (k, f) in features.iter().enumerate() {
        let properties = f
            .get("properties")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();
        let id = match properties.get(id_property) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return schema(format!("feature {k} lacks a '{id_property}' property")),
        };
        let Some(geom) = f.get("geometry") else {
            return schema(format!("feature {id} has no geometry"));
        };
        let geometry = parse_geometry(geom, &id)?;
        out.push(Feature {
            id,
            geometry,
            properties,
        });
    }
    Ok(out)
}

fn parse_geometry(g: &Value, id: &str) -> Result<MultiPolygon, ParseError> {
    let coords = g.get("coordinates");
    match (g.get("type").and_then(Value::as_str), coords) {
        (Some("Polygon"), Some(c)) => Ok(MultiPolygon::new(vec![parse_polygon(c, id)?])),
        (Some("MultiPolygon"), Some(Value::Array(parts))) => parts
            .iter()
            .map(|c| parse_polygon(c, id))
            .collect::<Result<Vec<_>, _>>()
            .map(MultiPolygon::new),
        (Some(other), _) => schema(format!("feature {id}: unsupported geometry type {other}")),
        _ => schema(format!("feature {id}: malformed geometry")),
    }
}

fn parse_polygon(c: &Value, id: &str) -> Result<Polygon, ParseError> {
    let Some(rings) = c.as_array() else {
        return schema(format!("feature {id}: polygon coordinates must be an array"));
    };
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let Some(pts) = ring.as_array() else {
            return schema(format!("feature {id}: ring must be an array"));
        };
        let mut r = Vec::with_capacity(pts.len());
        for p in pts {
            match p.as_array().map(|a| a.as_slice()) {
                Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                    (Some(x), Some(y)) => r.push(Point::new(x, y)),
                    _ => return schema(format!("feature {id}: non-numeric coordinate")),
                },
                _ => return schema(format!("feature {id}: position needs two numbers")),
            }
        }
        parsed.push(r);
    }
    if parsed.is_empty() {
        return schema(format!("feature {id}: polygon without rings"));
    }
    let exterior = parsed.remove(0);
    Polygon::new(exterior, parsed).map_err(|e| ParseError::Geometry(id.to_string(), e))
}

/// Serializes polygons as a FeatureCollection with extra string properties.
pub fn to_feature_collection<'a>(
    features: impl IntoIterator<Item = (&'a str, &'a MultiPolygon, Vec<(&'a str, String)>)>,
) -> Value {
    let ring_json = |ring: &[Point]| -> Value {
        let mut pts: Vec<Value> = ring
            .iter()
            .map(|p| Value::from(vec![p.x, p.y]))
            .collect();
        if let Some(first) = pts.first().cloned() {
            pts.push(first);
        }
        Value::Array(pts)
    };
    let feats: Vec<Value> = features
        .into_iter()
        .map(|(id, mp, props)| {
            let polys: Vec<Value> = mp
                .parts
                .iter()
                .map(|p| Value::Array(p.rings().map(ring_json).collect()))
                .collect();
            let mut properties = Map::new();
            properties.insert("id".into(), Value::from(id));
            for (k, v) in props {
                properties.insert(k.into(), Value::from(v));
            }
            serde_json::json!({
                "type": "Feature",
                "properties": properties,
                "geometry": {"type": "MultiPolygon", "coordinates": polys},
            })
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": feats})
}
