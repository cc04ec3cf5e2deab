//! Sales CSV reading and writing.
//!
//! Header: `dwelling_id,price,date,region,prop_type[,bedrooms,land_area,bathrooms,parking]`.
//! The first five columns are mandatory; the trailing ones may be omitted
//! from the header (as a suffix) or left empty per row.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::time::{discretize_time, week_of_year, week_start};
use super::{land_band, Dataset, HedonicCovariates, PropType, RegionRegistry, SaleRecord};
use crate::error::{Error, Result};

pub const SALES_HEADER: [&str; 9] = [
    "dwelling_id",
    "price",
    "date",
    "region",
    "prop_type",
    "bedrooms",
    "land_area",
    "bathrooms",
    "parking",
];
const REQUIRED_COLUMNS: usize = 5;

/// A rejected data row. `row` is 1-based and counts data rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct RowReject {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    pub rejects: Vec<RowReject>,
}

pub fn parse_sales_csv(path: &Path, registry: &RegionRegistry) -> Result<ParseOutcome> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let outcome = read_sales_csv(file, registry)?;
    if outcome.dataset.is_empty() && !outcome.rejects.is_empty() {
        return Err(Error::NoValidRows {
            path: path.to_path_buf(),
            rejected: outcome.rejects.len(),
        });
    }
    Ok(outcome)
}

/// Reads sales from any reader. Unlike [`parse_sales_csv`] this never fails
/// on row content; an all-rejected input yields an empty dataset.
pub fn read_sales_csv<R: Read>(reader: R, registry: &RegionRegistry) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    check_header(&header)?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| parse_row(&row, registry));
        match parsed {
            Ok(rec) => records.push(rec),
            Err(reason) => rejects.push(RowReject { row: row_no, reason }),
        }
    }
    if !rejects.is_empty() {
        log::warn!("rejected {} sales rows", rejects.len());
    }
    Ok(ParseOutcome {
        dataset: Dataset::new(records),
        rejects,
    })
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    if header.len() < REQUIRED_COLUMNS || header.len() > SALES_HEADER.len() {
        return Err(Error::Header(format!(
            "expected {}..={} columns, found {}",
            REQUIRED_COLUMNS,
            SALES_HEADER.len(),
            header.len()
        )));
    }
    for (i, (got, want)) in header.iter().zip(SALES_HEADER).enumerate() {
        if !got.eq_ignore_ascii_case(want) {
            return Err(Error::Header(format!("column {i} is `{got}`, expected `{want}`")));
        }
    }
    Ok(())
}

fn field(row: &csv::StringRecord, i: usize) -> Option<&str> {
    row.get(i).filter(|s| !s.is_empty())
}

fn optional_number(row: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<Option<f64>, String> {
    match field(row, i) {
        None => Ok(None),
        Some(s) => s
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| format!("invalid {name} `{s}`")),
    }
}

fn parse_row(row: &csv::StringRecord, registry: &RegionRegistry) -> std::result::Result<SaleRecord, String> {
    let dwelling_id = field(row, 0).ok_or("missing dwelling_id")?.to_string();
    let price_s = field(row, 1).ok_or("missing price")?;
    let price: f64 = price_s.parse().map_err(|_| format!("invalid price `{price_s}`"))?;
    if !price.is_finite() {
        return Err(format!("invalid price `{price_s}`"));
    }
    if price <= 0.0 {
        return Err("non-positive price".to_string());
    }
    let date_s = field(row, 2).ok_or("missing date")?;
    let date = date_s
        .get(..10)
        .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
        .ok_or_else(|| format!("invalid date `{date_s}`"))?;
    let week = discretize_time(date).map_err(|e| e.to_string())?;
    let region_s = field(row, 3).ok_or("missing region")?;
    let region = registry
        .resolve(region_s)
        .map_err(|_| format!("unknown region `{region_s}`"))?;
    let prop_type: PropType = field(row, 4)
        .ok_or("missing prop_type")?
        .parse()
        .map_err(|e: Error| e.to_string())?;

    let bedrooms = match field(row, 5) {
        None => None,
        Some(s) => Some(s.parse::<u8>().map_err(|_| format!("invalid bedrooms `{s}`"))?),
    };
    let land_area = optional_number(row, 6, "land_area")?;
    let bathrooms = optional_number(row, 7, "bathrooms")?;
    let parking = optional_number(row, 8, "parking")?;
    let log_land_area = land_area.filter(|a| *a > 0.0).map(f64::ln);

    Ok(SaleRecord {
        dwelling_id,
        log_price: price.ln(),
        week,
        week_of_year: week_of_year(week),
        region,
        prop_type,
        bedrooms,
        land_band: land_area.and_then(land_band),
        hedonic: HedonicCovariates {
            bathrooms,
            parking,
            log_land_area,
        },
    })
}

/// Writes a dataset in the documented schema. Dates are the first day of the
/// record's week, so a write/read cycle preserves weeks exactly.
pub fn write_sales_csv<W: Write>(dataset: &Dataset, registry: &RegionRegistry, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SALES_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in dataset {
        w.write_record([
            r.dwelling_id.clone(),
            r.price().to_string(),
            week_start(r.week).format("%Y-%m-%d").to_string(),
            registry.id(r.region).to_string(),
            r.prop_type.to_string(),
            r.bedrooms.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.hedonic.log_land_area.map(f64::exp)),
            opt(r.hedonic.bathrooms),
            opt(r.hedonic.parking),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> RegionRegistry {
        RegionRegistry::from_json_str(r#"{"regions": [{"id": "R1", "metro": "M"}, {"id": "R2", "metro": "M"}]}"#)
            .unwrap()
    }

    #[test]
    fn parses_documented_row() {
        let csv = "dwelling_id,price,date,region,prop_type,bedrooms,land_area,bathrooms,parking\n\
                   d1,500000,2010-01-04,R1,house,3,600,2,1\n";
        let out = read_sales_csv(csv.as_bytes(), &registry()).unwrap();
        assert!(out.rejects.is_empty());
        let r = &out.dataset.records[0];
        assert!((r.log_price - 13.122_363_377_404_328).abs() < 1e-12);
        assert_eq!(r.week, 1044);
        assert_eq!(r.week_of_year, 1044 % 52);
        assert_eq!(r.bedrooms, Some(3));
        assert_eq!(r.land_band, land_band(600.0));
        assert_eq!(r.hedonic.bathrooms, Some(2.0));
    }

    #[test]
    fn rejects_are_row_indexed() {
        let csv = "dwelling_id,price,date,region,prop_type\n\
                   d1,0,2010-01-04,R1,house\n\
                   d2,100,2010-01-04,R9,house\n\
                   d3,100,1980-01-04,R1,house\n\
                   d4,100,2010-01-04,R2,unit\n";
        let out = read_sales_csv(csv.as_bytes(), &registry()).unwrap();
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.rejects.len(), 3);
        assert_eq!(
            out.rejects[0],
            RowReject {
                row: 1,
                reason: "non-positive price".into()
            }
        );
        assert_eq!(out.rejects[1].row, 2);
        assert!(out.rejects[1].reason.contains("unknown region"));
        assert!(out.rejects[2].reason.contains("epoch"));
    }

    #[test]
    fn empty_file_with_header() {
        let out = read_sales_csv("dwelling_id,price,date,region,prop_type\n".as_bytes(), &registry()).unwrap();
        assert!(out.dataset.is_empty());
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn malformed_header() {
        let err = read_sales_csv("id,price,date,region,prop_type\n".as_bytes(), &registry()).unwrap_err();
        assert!(matches!(err, Error::Header(_)));
        let err = read_sales_csv("dwelling_id,price\n".as_bytes(), &registry()).unwrap_err();
        assert!(matches!(err, Error::Header(_)));
    }

    #[test]
    fn all_rows_failing_is_fatal_for_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(
            &path,
            "dwelling_id,price,date,region,prop_type\nd1,-5,2010-01-04,R1,house\n",
        )
        .unwrap();
        assert!(matches!(
            parse_sales_csv(&path, &registry()),
            Err(Error::NoValidRows { .. })
        ));
        assert!(matches!(
            parse_sales_csv(&dir.path().join("missing.csv"), &registry()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_read_preserves_records() {
        let csv = "dwelling_id,price,date,region,prop_type,bedrooms,land_area,bathrooms,parking\n\
                   d1,512345.5,2010-01-04,R1,house,3,600,2,\n\
                   d2,300000,2011-03-09,R2,unit,,,,\n";
        let reg = registry();
        let first = read_sales_csv(csv.as_bytes(), &reg).unwrap().dataset;
        let mut buf = Vec::new();
        write_sales_csv(&first, &reg, &mut buf).unwrap();
        let second = read_sales_csv(buf.as_slice(), &reg).unwrap().dataset;
        assert_eq!(first.len(), second.len());
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(a.week, b.week);
            assert!((a.log_price - b.log_price).abs() < 1e-12);
            assert_eq!(a.land_band, b.land_band);
        }
    }
}
