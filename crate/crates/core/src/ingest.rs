//! CSV ingestion for the source datasets: parcels, residential lead tests,
//! service-line records, private-side inspections and fire hydrants.
//!
//! Parsers are pure functions over a reader. Each returns its records plus a
//! [`ParseReport`] so that `rows_read == parsed + rows_rejected` holds for
//! every file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parcel attributes. `Id` is the parcel identifier, which also doubles as a
/// numeric feature (its digits are geographically assigned).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParcelField {
    Pid,
    Zip,
    OwnerType,
    Homestead,
    HomesteadPercent,
    HomeSev,
    LandValue,
    LandImprovementsValue,
    ResidentialBuildingValue,
    CommercialBuildingValue,
    BuildingStoreys,
    ParcelAcres,
    UseType,
    PropClass,
    OldPropClass,
    YearBuilt,
    UspsVacancy,
    Zoning,
    FutureLanduse,
    DraftZone,
    HousingCondition2012,
    HousingCondition2014,
    CommercialCondition2013,
    Rental,
    ResidentialBuildingStyle,
    Latitude,
    Longitude,
    HydrantType,
    Ward,
    Precinct,
    Centract,
    Cenblock,
    SlType,
    SlType2,
    SlLead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Id,
    Numeric,
    Categorical,
}

impl ParcelField {
    pub const ALL: [ParcelField; 35] = [
        ParcelField::Pid,
        ParcelField::Zip,
        ParcelField::OwnerType,
        ParcelField::Homestead,
        ParcelField::HomesteadPercent,
        ParcelField::HomeSev,
        ParcelField::LandValue,
        ParcelField::LandImprovementsValue,
        ParcelField::ResidentialBuildingValue,
        ParcelField::CommercialBuildingValue,
        ParcelField::BuildingStoreys,
        ParcelField::ParcelAcres,
        ParcelField::UseType,
        ParcelField::PropClass,
        ParcelField::OldPropClass,
        ParcelField::YearBuilt,
        ParcelField::UspsVacancy,
        ParcelField::Zoning,
        ParcelField::FutureLanduse,
        ParcelField::DraftZone,
        ParcelField::HousingCondition2012,
        ParcelField::HousingCondition2014,
        ParcelField::CommercialCondition2013,
        ParcelField::Rental,
        ParcelField::ResidentialBuildingStyle,
        ParcelField::Latitude,
        ParcelField::Longitude,
        ParcelField::HydrantType,
        ParcelField::Ward,
        ParcelField::Precinct,
        ParcelField::Centract,
        ParcelField::Cenblock,
        ParcelField::SlType,
        ParcelField::SlType2,
        ParcelField::SlLead,
    ];

    /// Column name used in files written by this crate.
    pub fn name(self) -> &'static str {
        use ParcelField::*;
        match self {
            Pid => "pid",
            Zip => "zip",
            OwnerType => "owner_type",
            Homestead => "homestead",
            HomesteadPercent => "homestead_percent",
            HomeSev => "home_sev",
            LandValue => "land_value",
            LandImprovementsValue => "land_improvements_value",
            ResidentialBuildingValue => "residential_building_value",
            CommercialBuildingValue => "commercial_building_value",
            BuildingStoreys => "building_storeys",
            ParcelAcres => "parcel_acres",
            UseType => "use_type",
            PropClass => "prop_class",
            OldPropClass => "old_prop_class",
            YearBuilt => "year_built",
            UspsVacancy => "usps_vacancy",
            Zoning => "zoning",
            FutureLanduse => "future_landuse",
            DraftZone => "draft_zone",
            HousingCondition2012 => "housing_condition_2012",
            HousingCondition2014 => "housing_condition_2014",
            CommercialCondition2013 => "commercial_condition_2013",
            Rental => "rental",
            ResidentialBuildingStyle => "residential_building_style",
            Latitude => "latitude",
            Longitude => "longitude",
            HydrantType => "hydrant_type",
            Ward => "ward",
            Precinct => "precinct",
            Centract => "centract",
            Cenblock => "cenblock",
            SlType => "sl_type",
            SlType2 => "sl_type2",
            SlLead => "sl_lead",
        }
    }

    /// Header spelling used by the municipal data dictionary.
    pub fn display_name(self) -> &'static str {
        use ParcelField::*;
        match self {
            Pid => "PID",
            Zip => "Property Zip Code",
            OwnerType => "Owner Type",
            Homestead => "Homestead",
            HomesteadPercent => "Homestead Percent",
            HomeSev => "HomeSEV",
            LandValue => "Land Value",
            LandImprovementsValue => "Land Improvements Value",
            ResidentialBuildingValue => "Residential Building Value",
            CommercialBuildingValue => "Commercial Building Value",
            BuildingStoreys => "Building Storeys",
            ParcelAcres => "Parcel Acres",
            UseType => "Use Type",
            PropClass => "Prop Class",
            OldPropClass => "Old Prop class",
            YearBuilt => "Year Built",
            UspsVacancy => "USPS Vacancy",
            Zoning => "Zoning",
            FutureLanduse => "Future Landuse",
            DraftZone => "DRAFT Zone",
            HousingCondition2012 => "Housing Condition 2012",
            HousingCondition2014 => "Housing Condition 2014",
            CommercialCondition2013 => "Commercial Condition 2013",
            Rental => "Rental",
            ResidentialBuildingStyle => "Residential Building Style",
            Latitude => "Latitude",
            Longitude => "Longitude",
            HydrantType => "Hydrant Type",
            Ward => "Ward",
            Precinct => "PRECINCT",
            Centract => "CENTRACT",
            Cenblock => "CENBLOCK",
            SlType => "SL_Type",
            SlType2 => "SL_Type2",
            SlLead => "SL_Lead",
        }
    }

    pub fn kind(self) -> FieldKind {
        use ParcelField::*;
        match self {
            Pid => FieldKind::Id,
            HomesteadPercent | HomeSev | LandValue | LandImprovementsValue
            | ResidentialBuildingValue | CommercialBuildingValue | BuildingStoreys
            | ParcelAcres | YearBuilt | Latitude | Longitude | Centract => FieldKind::Numeric,
            _ => FieldKind::Categorical,
        }
    }

    pub fn from_name(name: &str) -> Option<ParcelField> {
        let key = header_key(name);
        ParcelField::ALL.iter().copied().find(|f| {
            header_key(f.name()) == key
                || header_key(f.display_name()) == key
                || (matches!(f, ParcelField::Zip) && (key == "zipcode" || key == "propertyzip"))
        })
    }
}

impl fmt::Display for ParcelField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Case- and punctuation-insensitive header key.
fn header_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// One land parcel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParcelRecord {
    pub pid: String,
    /// Street address used for matching tests; not a model feature.
    pub address: Option<String>,
    pub zip: Option<String>,
    pub owner_type: Option<String>,
    pub homestead: Option<String>,
    pub homestead_percent: Option<f64>,
    pub home_sev: Option<f64>,
    pub land_value: Option<f64>,
    pub land_improvements_value: Option<f64>,
    pub residential_building_value: Option<f64>,
    pub commercial_building_value: Option<f64>,
    pub building_storeys: Option<f64>,
    pub parcel_acres: Option<f64>,
    pub use_type: Option<String>,
    pub prop_class: Option<String>,
    pub old_prop_class: Option<String>,
    pub year_built: Option<f64>,
    pub usps_vacancy: Option<String>,
    pub zoning: Option<String>,
    pub future_landuse: Option<String>,
    pub draft_zone: Option<String>,
    pub housing_condition_2012: Option<String>,
    pub housing_condition_2014: Option<String>,
    pub commercial_condition_2013: Option<String>,
    pub rental: Option<String>,
    pub residential_building_style: Option<String>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub hydrant_type: Option<String>,
    pub ward: Option<String>,
    pub precinct: Option<String>,
    pub centract: Option<f64>,
    pub cenblock: Option<String>,
    pub sl_type: Option<String>,
    pub sl_type2: Option<String>,
    pub sl_lead: Option<String>,
    /// Set when the coordinates fall outside the configured bounding box.
    #[serde(default)]
    pub outside_bbox: bool,
}

impl ParcelRecord {
    pub fn new(pid: impl Into<String>) -> Self {
        Self { pid: pid.into(), ..Default::default() }
    }

    pub fn numeric(&self, field: ParcelField) -> Option<f64> {
        use ParcelField::*;
        match field {
            Pid => pid_numeric(&self.pid),
            HomesteadPercent => self.homestead_percent,
            HomeSev => self.home_sev,
            LandValue => self.land_value,
            LandImprovementsValue => self.land_improvements_value,
            ResidentialBuildingValue => self.residential_building_value,
            CommercialBuildingValue => self.commercial_building_value,
            BuildingStoreys => self.building_storeys,
            ParcelAcres => self.parcel_acres,
            YearBuilt => self.year_built,
            Latitude => self.latitude,
            Longitude => self.longitude,
            Centract => self.centract,
            _ => None,
        }
    }

    pub fn category(&self, field: ParcelField) -> Option<&str> {
        use ParcelField::*;
        let v = match field {
            Zip => &self.zip,
            OwnerType => &self.owner_type,
            Homestead => &self.homestead,
            UseType => &self.use_type,
            PropClass => &self.prop_class,
            OldPropClass => &self.old_prop_class,
            UspsVacancy => &self.usps_vacancy,
            Zoning => &self.zoning,
            FutureLanduse => &self.future_landuse,
            DraftZone => &self.draft_zone,
            HousingCondition2012 => &self.housing_condition_2012,
            HousingCondition2014 => &self.housing_condition_2014,
            CommercialCondition2013 => &self.commercial_condition_2013,
            Rental => &self.rental,
            ResidentialBuildingStyle => &self.residential_building_style,
            HydrantType => &self.hydrant_type,
            Ward => &self.ward,
            Precinct => &self.precinct,
            Cenblock => &self.cenblock,
            SlType => &self.sl_type,
            SlType2 => &self.sl_type2,
            SlLead => &self.sl_lead,
            _ => return None,
        };
        v.as_deref()
    }

    fn set_numeric(&mut self, field: ParcelField, value: Option<f64>) {
        use ParcelField::*;
        let slot = match field {
            HomesteadPercent => &mut self.homestead_percent,
            HomeSev => &mut self.home_sev,
            LandValue => &mut self.land_value,
            LandImprovementsValue => &mut self.land_improvements_value,
            ResidentialBuildingValue => &mut self.residential_building_value,
            CommercialBuildingValue => &mut self.commercial_building_value,
            BuildingStoreys => &mut self.building_storeys,
            ParcelAcres => &mut self.parcel_acres,
            YearBuilt => &mut self.year_built,
            Latitude => &mut self.latitude,
            Longitude => &mut self.longitude,
            Centract => &mut self.centract,
            _ => return,
        };
        *slot = value;
    }

    fn set_category(&mut self, field: ParcelField, value: Option<String>) {
        use ParcelField::*;
        let slot = match field {
            Zip => &mut self.zip,
            OwnerType => &mut self.owner_type,
            Homestead => &mut self.homestead,
            UseType => &mut self.use_type,
            PropClass => &mut self.prop_class,
            OldPropClass => &mut self.old_prop_class,
            UspsVacancy => &mut self.usps_vacancy,
            Zoning => &mut self.zoning,
            FutureLanduse => &mut self.future_landuse,
            DraftZone => &mut self.draft_zone,
            HousingCondition2012 => &mut self.housing_condition_2012,
            HousingCondition2014 => &mut self.housing_condition_2014,
            CommercialCondition2013 => &mut self.commercial_condition_2013,
            Rental => &mut self.rental,
            ResidentialBuildingStyle => &mut self.residential_building_style,
            HydrantType => &mut self.hydrant_type,
            Ward => &mut self.ward,
            Precinct => &mut self.precinct,
            Cenblock => &mut self.cenblock,
            SlType => &mut self.sl_type,
            SlType2 => &mut self.sl_type2,
            SlLead => &mut self.sl_lead,
            _ => return,
        };
        *slot = value;
    }

    /// Raw cell text for `field`, as it would be written back to CSV.
    pub fn cell(&self, field: ParcelField) -> String {
        match field.kind() {
            FieldKind::Id => self.pid.clone(),
            FieldKind::Numeric => self.numeric(field).map(|v| v.to_string()).unwrap_or_default(),
            FieldKind::Categorical => self.category(field).unwrap_or_default().to_string(),
        }
    }

    pub fn coords(&self) -> Option<(f64, f64)> {
        Some((self.latitude?, self.longitude?))
    }
}

/// Digits of a parcel id read as a number; `None` if the id has no digits.
pub fn pid_numeric(pid: &str) -> Option<f64> {
    let digits: String = pid.chars().filter(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        None
    } else {
        digits.parse::<f64>().ok()
    }
}

/// Geographic bounds used to flag suspicious coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    /// Flint, Michigan and its immediate surroundings.
    pub const FLINT: BoundingBox =
        BoundingBox { min_lat: 42.95, max_lat: 43.10, min_lon: -83.80, max_lon: -83.58 };

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox::FLINT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    Unparseable,
    OutOfRange,
    OutsideBoundingBox,
}

/// A cell-level data-quality note. The row is the CSV line number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseFlag {
    pub line: u64,
    pub column: String,
    pub kind: FlagKind,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Per-file parse summary. Serializes to
/// `{rows_read, rows_rejected, per_column_missing}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub per_column_missing: BTreeMap<String, usize>,
    #[serde(skip)]
    pub rejected: Vec<RejectedRow>,
    #[serde(skip)]
    pub flags: Vec<ParseFlag>,
}

impl ParseReport {
    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.rows_rejected += 1;
        self.rejected.push(RejectedRow { line, reason: reason.into() });
    }

    fn missing(&mut self, column: &str) {
        *self.per_column_missing.entry(column.to_string()).or_default() += 1;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParcelParseOptions {
    pub bbox: BoundingBox,
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(source)
}

fn non_empty(s: &str) -> Option<&str> {
    let t = s.trim();
    (!t.is_empty()).then_some(t)
}

/// Parses a number, tolerating currency symbols and thousands separators.
fn parse_number(s: &str) -> Option<f64> {
    let cleaned: String = s.chars().filter(|c| !matches!(c, '$' | ',' | ' ')).collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn numeric_range(field: ParcelField) -> Option<(f64, f64)> {
    match field {
        ParcelField::YearBuilt => Some((1800.0, 2100.0)),
        ParcelField::HomesteadPercent => Some((0.0, 100.0)),
        _ => None,
    }
}

/// Parses the parcel file. Column names are matched case-insensitively against
/// both the snake-case names and the data-dictionary spellings; unknown columns
/// are ignored.
pub fn parse_parcels<R: Read>(
    source: R,
    opts: &ParcelParseOptions,
) -> Result<(Vec<ParcelRecord>, ParseReport)> {
    let mut rdr = reader(source);
    let headers = rdr.headers()?.clone();
    let mut columns: Vec<(usize, ParcelField)> = Vec::new();
    let mut address_col = None;
    for (i, h) in headers.iter().enumerate() {
        if let Some(f) = ParcelField::from_name(h) {
            if !columns.iter().any(|(_, g)| *g == f) {
                columns.push((i, f));
            }
        } else if header_key(h) == "address" && address_col.is_none() {
            address_col = Some(i);
        }
    }
    let pid_col = columns
        .iter()
        .find(|(_, f)| *f == ParcelField::Pid)
        .map(|(i, _)| *i)
        .ok_or_else(|| Error::MissingColumn("pid".into()))?;

    let mut report = ParseReport::default();
    for (_, f) in &columns {
        if *f != ParcelField::Pid {
            report.per_column_missing.insert(f.name().to_string(), 0);
        }
    }
    let mut parcels = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut duplicates = BTreeSet::new();

    for result in rdr.records() {
        report.rows_read += 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.reject(line, format!("malformed row: {e}"));
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let Some(pid) = record.get(pid_col).and_then(non_empty) else {
            report.reject(line, "empty pid");
            continue;
        };
        if seen.insert(pid.to_string(), parcels.len()).is_some() {
            duplicates.insert(pid.to_string());
        }
        let mut parcel = ParcelRecord::new(pid);
        parcel.address = address_col.and_then(|c| record.get(c)).and_then(non_empty).map(String::from);

        for &(col, field) in &columns {
            let raw = record.get(col).unwrap_or("");
            match field.kind() {
                FieldKind::Id => {}
                FieldKind::Categorical => {
                    let v = non_empty(raw).map(String::from);
                    if v.is_none() {
                        report.missing(field.name());
                    }
                    parcel.set_category(field, v);
                }
                FieldKind::Numeric => {
                    let Some(text) = non_empty(raw) else {
                        report.missing(field.name());
                        continue;
                    };
                    let mut flag = |kind| {
                        report.flags.push(ParseFlag {
                            line,
                            column: field.name().to_string(),
                            kind,
                            value: text.to_string(),
                        })
                    };
                    let value = match parse_number(text) {
                        None => {
                            flag(FlagKind::Unparseable);
                            None
                        }
                        Some(v) => match numeric_range(field) {
                            Some((lo, hi)) if !(lo..=hi).contains(&v) => {
                                flag(FlagKind::OutOfRange);
                                None
                            }
                            _ => Some(v),
                        },
                    };
                    if value.is_none() {
                        report.missing(field.name());
                    }
                    parcel.set_numeric(field, value);
                }
            }
        }
        if let Some((lat, lon)) = parcel.coords() {
            if !opts.bbox.contains(lat, lon) {
                parcel.outside_bbox = true;
                report.flags.push(ParseFlag {
                    line,
                    column: "latitude,longitude".into(),
                    kind: FlagKind::OutsideBoundingBox,
                    value: format!("{lat},{lon}"),
                });
            }
        }
        parcels.push(parcel);
    }
    if !duplicates.is_empty() {
        return Err(Error::DuplicatePid(duplicates.into_iter().collect()));
    }
    Ok((parcels, report))
}

/// Writes parcels using the snake-case column names plus `address`.
pub fn write_parcels<W: std::io::Write>(parcels: &[ParcelRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = vec!["pid", "address"];
    header.extend(ParcelField::ALL.iter().skip(1).map(|f| f.name()));
    w.write_record(&header)?;
    for p in parcels {
        let mut row = vec![p.pid.clone(), p.address.clone().unwrap_or_default()];
        row.extend(ParcelField::ALL.iter().skip(1).map(|f| p.cell(*f)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One voluntary residential water sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTest {
    pub sample_date: Option<NaiveDate>,
    pub lead_ppb: f64,
    pub copper_ppb: Option<f64>,
    pub address: String,
    pub pid: Option<String>,
}

fn find_column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| {
        let k = header_key(h);
        names.iter().any(|n| header_key(n) == k)
    })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    ["%Y-%m-%d", "%m/%d/%Y", "%m/%d/%y", "%Y/%m/%d"]
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(s, fmt).ok())
}

/// Parses residential test results. Rows with a negative or unreadable lead
/// value are rejected with their line numbers; an empty file is not an error.
pub fn parse_tests<R: Read>(source: R) -> Result<(Vec<LeadTest>, ParseReport)> {
    let mut rdr = reader(source);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(e.into()),
    };
    let mut report = ParseReport::default();
    if headers.is_empty() {
        return Ok((Vec::new(), report));
    }
    let lead_col = find_column(&headers, &["lead_ppb", "lead", "lead (ppb)", "lead_in_ppb"])
        .ok_or_else(|| Error::MissingColumn("lead_ppb".into()))?;
    let date_col = find_column(&headers, &["sample_date", "date", "date submitted", "date_submitted"]);
    let copper_col = find_column(&headers, &["copper_ppb", "copper", "copper (ppb)"]);
    let address_col = find_column(&headers, &["address", "street address"]);
    let pid_col = find_column(&headers, &["pid", "parcel_id"]);
    for c in ["sample_date", "copper_ppb", "address"] {
        report.per_column_missing.insert(c.to_string(), 0);
    }

    let mut tests = Vec::new();
    for result in rdr.records() {
        report.rows_read += 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.reject(line, format!("malformed row: {e}"));
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |c: Option<usize>| c.and_then(|c| record.get(c)).and_then(non_empty);
        let lead = match cell(Some(lead_col)).map(|s| (s, parse_number(s))) {
            None => {
                report.reject(line, "missing lead value");
                continue;
            }
            Some((s, None)) => {
                report.reject(line, format!("unparseable lead value `{s}`"));
                continue;
            }
            Some((_, Some(v))) if v < 0.0 => {
                report.reject(line, format!("negative lead value {v}"));
                continue;
            }
            Some((_, Some(v))) => v,
        };
        let copper = match cell(copper_col) {
            None => {
                report.missing("copper_ppb");
                None
            }
            Some(s) => match parse_number(s) {
                Some(v) if v >= 0.0 => Some(v),
                Some(v) => {
                    report.reject(line, format!("negative copper value {v}"));
                    continue;
                }
                None => {
                    report.missing("copper_ppb");
                    None
                }
            },
        };
        let sample_date = cell(date_col).and_then(parse_date);
        if sample_date.is_none() {
            report.missing("sample_date");
        }
        let address = cell(address_col).unwrap_or_default().to_string();
        if address.is_empty() {
            report.missing("address");
        }
        tests.push(LeadTest {
            sample_date,
            lead_ppb: lead,
            copper_ppb: copper,
            address,
            pid: cell(pid_col).map(String::from),
        });
    }
    Ok((tests, report))
}

pub fn write_tests<W: std::io::Write>(tests: &[LeadTest], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["sample_date", "lead_ppb", "copper_ppb", "address"])?;
    for t in tests {
        w.write_record([
            t.sample_date.map(|d| d.to_string()).unwrap_or_default(),
            t.lead_ppb.to_string(),
            t.copper_ppb.map(|v| v.to_string()).unwrap_or_default(),
            t.address.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pipe material vocabulary for service-line segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Material {
    Copper,
    Lead,
    Galvanized,
    Tubeloy,
    Plastic,
    Other,
    Unknown,
}

impl Material {
    pub const ALL: [Material; 7] = [
        Material::Copper,
        Material::Lead,
        Material::Galvanized,
        Material::Tubeloy,
        Material::Plastic,
        Material::Other,
        Material::Unknown,
    ];

    fn from_token(token: &str) -> Option<Material> {
        let t = token.trim().to_ascii_lowercase();
        Some(match t.as_str() {
            "" | "?" | "unknown" | "unkown" | "unk" => Material::Unknown,
            "copper" | "cu" | "c" => Material::Copper,
            "lead" | "pb" | "l" => Material::Lead,
            "galvanized" | "galv" | "galvanised" => Material::Galvanized,
            "tubeloy" => Material::Tubeloy,
            "plastic" | "pvc" | "pe" => Material::Plastic,
            "other" => Material::Other,
            _ => return None,
        })
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Result of splitting a recorded service-line label into its private
/// (curb box to meter) and public (main to curb box) segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlSplit {
    pub private_material: Material,
    pub public_material: Material,
    /// The label was a single token applied to both segments.
    pub single_token: bool,
    /// Number of tokens that were not in the vocabulary (mapped to `Other`).
    pub unrecognized: u8,
}

/// Splits a raw service-line label. `"X/Y"` reads as private `X`, public `Y`;
/// a single token is applied to both segments; blanks and `?` are `Unknown`.
pub fn split_sl_label(raw: &str) -> SlSplit {
    let mut unrecognized = 0u8;
    let mut token = |t: &str| {
        Material::from_token(t).unwrap_or_else(|| {
            unrecognized += 1;
            Material::Other
        })
    };
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return SlSplit {
            private_material: Material::Unknown,
            public_material: Material::Unknown,
            single_token: false,
            unrecognized: 0,
        };
    }
    let (private_material, public_material, single_token) = match trimmed.split_once('/') {
        Some((a, b)) => (token(a), token(b), false),
        None => {
            let m = token(trimmed);
            (m, m, true)
        }
    };
    SlSplit { private_material, public_material, single_token, unrecognized }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceLineRecord {
    pub pid: String,
    pub raw_label: String,
    pub private_material: Material,
    pub public_material: Material,
    pub single_token: bool,
}

/// Parses `pid,sl_type` rows. The third return value counts label tokens that
/// fell outside the material vocabulary.
pub fn parse_service_lines<R: Read>(
    source: R,
) -> Result<(Vec<ServiceLineRecord>, ParseReport, usize)> {
    let mut rdr = reader(source);
    let headers = rdr.headers()?.clone();
    let pid_col = find_column(&headers, &["pid"]).ok_or_else(|| Error::MissingColumn("pid".into()))?;
    let label_col = find_column(&headers, &["sl_type", "sl_label", "sl record", "service_line", "label"])
        .ok_or_else(|| Error::MissingColumn("sl_type".into()))?;
    let mut report = ParseReport::default();
    let mut records = Vec::new();
    let mut warnings = 0usize;
    for result in rdr.records() {
        report.rows_read += 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                report.reject(e.position().map(|p| p.line()).unwrap_or(0), e.to_string());
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let Some(pid) = record.get(pid_col).and_then(non_empty) else {
            report.reject(line, "empty pid");
            continue;
        };
        let raw = record.get(label_col).unwrap_or("").trim().to_string();
        if raw.is_empty() {
            report.missing("sl_type");
        }
        let split = split_sl_label(&raw);
        warnings += split.unrecognized as usize;
        records.push(ServiceLineRecord {
            pid: pid.to_string(),
            raw_label: raw,
            private_material: split.private_material,
            public_material: split.public_material,
            single_token: split.single_token,
        });
    }
    Ok((records, report, warnings))
}

pub fn write_service_lines<W: std::io::Write>(records: &[ServiceLineRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["pid", "sl_type"])?;
    for r in records {
        w.write_record([&r.pid, &r.raw_label])?;
    }
    w.flush()?;
    Ok(())
}

/// Material found on the private side during an in-home inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InspectedMaterial {
    Copper,
    Galvanized,
    Lead,
}

impl InspectedMaterial {
    pub const ALL: [InspectedMaterial; 3] =
        [InspectedMaterial::Copper, InspectedMaterial::Galvanized, InspectedMaterial::Lead];

    pub fn parse(s: &str) -> Option<Self> {
        match Material::from_token(s)? {
            Material::Copper => Some(InspectedMaterial::Copper),
            Material::Galvanized => Some(InspectedMaterial::Galvanized),
            Material::Lead => Some(InspectedMaterial::Lead),
            _ => None,
        }
    }
}

impl fmt::Display for InspectedMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionRecord {
    pub pid: String,
    pub private_material_inspected: InspectedMaterial,
}

/// Parses inspection results. A parcel inspected twice is an error.
pub fn parse_inspections<R: Read>(source: R) -> Result<(Vec<InspectionRecord>, ParseReport)> {
    let mut rdr = reader(source);
    let headers = rdr.headers()?.clone();
    let pid_col = find_column(&headers, &["pid"]).ok_or_else(|| Error::MissingColumn("pid".into()))?;
    let mat_col = find_column(
        &headers,
        &["private_material_inspected", "material", "inspected_material", "private_material"],
    )
    .ok_or_else(|| Error::MissingColumn("private_material_inspected".into()))?;
    let mut report = ParseReport::default();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for result in rdr.records() {
        report.rows_read += 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                report.reject(e.position().map(|p| p.line()).unwrap_or(0), e.to_string());
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let Some(pid) = record.get(pid_col).and_then(non_empty) else {
            report.reject(line, "empty pid");
            continue;
        };
        let raw = record.get(mat_col).unwrap_or("");
        let Some(m) = InspectedMaterial::parse(raw) else {
            report.reject(line, format!("unknown inspected material `{raw}`"));
            continue;
        };
        if !seen.insert(pid.to_string()) {
            return Err(Error::DuplicateInspection(pid.to_string()));
        }
        out.push(InspectionRecord { pid: pid.to_string(), private_material_inspected: m });
    }
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydrantRecord {
    pub hydrant_id: String,
    pub hydrant_type: String,
    pub latitude: f64,
    pub longitude: f64,
}

/// Parses hydrants; rows without both coordinates are rejected because they
/// cannot take part in nearest-hydrant matching.
pub fn parse_hydrants<R: Read>(source: R) -> Result<(Vec<HydrantRecord>, ParseReport)> {
    let mut rdr = reader(source);
    let headers = rdr.headers()?.clone();
    let col = |names: &[&str], canonical: &str| {
        find_column(&headers, names).ok_or_else(|| Error::MissingColumn(canonical.into()))
    };
    let id_col = col(&["hydrant_id", "id"], "hydrant_id")?;
    let type_col = col(&["hydrant_type", "type"], "hydrant_type")?;
    let lat_col = col(&["latitude", "lat"], "latitude")?;
    let lon_col = col(&["longitude", "lon", "lng"], "longitude")?;
    let mut report = ParseReport::default();
    let mut out = Vec::new();
    for result in rdr.records() {
        report.rows_read += 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                report.reject(e.position().map(|p| p.line()).unwrap_or(0), e.to_string());
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |c: usize| record.get(c).and_then(non_empty);
        let (Some(id), Some(lat), Some(lon)) = (
            get(id_col),
            get(lat_col).and_then(parse_number),
            get(lon_col).and_then(parse_number),
        ) else {
            report.reject(line, "hydrant without id or coordinates");
            continue;
        };
        out.push(HydrantRecord {
            hydrant_id: id.to_string(),
            hydrant_type: get(type_col).unwrap_or("Unknown").to_string(),
            latitude: lat,
            longitude: lon,
        });
    }
    Ok((out, report))
}

pub fn write_hydrants<W: std::io::Write>(hydrants: &[HydrantRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["hydrant_id", "hydrant_type", "latitude", "longitude"])?;
    for h in hydrants {
        w.write_record([
            h.hydrant_id.clone(),
            h.hydrant_type.clone(),
            h.latitude.to_string(),
            h.longitude.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const SUFFIXES: &[(&str, &str)] = &[
    ("STREET", "ST"),
    ("STR", "ST"),
    ("AVENUE", "AVE"),
    ("AV", "AVE"),
    ("ROAD", "RD"),
    ("DRIVE", "DR"),
    ("BOULEVARD", "BLVD"),
    ("LANE", "LN"),
    ("COURT", "CT"),
    ("PLACE", "PL"),
    ("PARKWAY", "PKWY"),
    ("HIGHWAY", "HWY"),
    ("CIRCLE", "CIR"),
    ("TERRACE", "TER"),
    ("TRAIL", "TRL"),
    ("HIGHLANDS", "HLS"),
    ("NORTH", "N"),
    ("SOUTH", "S"),
    ("EAST", "E"),
    ("WEST", "W"),
    ("APARTMENT", "APT"),
];

/// Canonical address key: uppercase, punctuation removed, whitespace
/// collapsed, street suffixes and directions abbreviated.
pub fn normalize_address(address: &str) -> String {
    let upper: String = address
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_uppercase() } else if c.is_whitespace() { ' ' } else { '\0' })
        .filter(|&c| c != '\0')
        .collect();
    upper
        .split_whitespace()
        .map(|tok| SUFFIXES.iter().find(|(long, _)| *long == tok).map_or(tok, |(_, short)| short))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// Matched tests, each carrying exactly one parcel id.
    pub matched: Vec<LeadTest>,
    pub discarded_unmatched: usize,
    pub discarded_ambiguous: usize,
}

impl MatchResult {
    pub fn discarded(&self) -> usize {
        self.discarded_unmatched + self.discarded_ambiguous
    }
}

/// Links tests to parcels. A test already carrying a known pid keeps it;
/// otherwise its normalized address must equal exactly one parcel's.
pub fn match_tests_to_parcels(tests: &[LeadTest], parcels: &[ParcelRecord]) -> MatchResult {
    let pids: BTreeSet<&str> = parcels.iter().map(|p| p.pid.as_str()).collect();
    let mut by_address: HashMap<String, Vec<&str>> = HashMap::new();
    for p in parcels {
        if let Some(a) = &p.address {
            let key = normalize_address(a);
            if !key.is_empty() {
                by_address.entry(key).or_default().push(&p.pid);
            }
        }
    }
    let mut out = MatchResult::default();
    for t in tests {
        if let Some(pid) = t.pid.as_deref().filter(|p| pids.contains(p)) {
            out.matched.push(LeadTest { pid: Some(pid.to_string()), ..t.clone() });
            continue;
        }
        match by_address.get(&normalize_address(&t.address)).map(Vec::as_slice) {
            Some([pid]) => out.matched.push(LeadTest { pid: Some(pid.to_string()), ..t.clone() }),
            Some(_) => out.discarded_ambiguous += 1,
            None => out.discarded_unmatched += 1,
        }
    }
    out
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

pub const UNKNOWN_HYDRANT: &str = "Unknown";

/// Type of the hydrant closest to `coords`; ties go to the smallest id.
/// Parcels without coordinates get `Unknown`.
pub fn nearest_hydrant(coords: Option<(f64, f64)>, hydrants: &[HydrantRecord]) -> Result<String> {
    if hydrants.is_empty() {
        return Err(Error::invalid("no hydrants available for matching"));
    }
    let Some((lat, lon)) = coords else {
        return Ok(UNKNOWN_HYDRANT.to_string());
    };
    let mut best: Option<(f64, &HydrantRecord)> = None;
    for h in hydrants {
        let d = haversine_m(lat, lon, h.latitude, h.longitude);
        let better = match best {
            None => true,
            Some((bd, bh)) => d < bd || (d == bd && h.hydrant_id < bh.hydrant_id),
        };
        if better {
            best = Some((d, h));
        }
    }
    Ok(best.map(|(_, h)| h.hydrant_type.clone()).unwrap_or_else(|| UNKNOWN_HYDRANT.into()))
}

/// Fills `hydrant_type` on every parcel from its nearest hydrant.
pub fn assign_hydrant_types(parcels: &mut [ParcelRecord], hydrants: &[HydrantRecord]) -> Result<()> {
    if hydrants.is_empty() {
        return Err(Error::invalid("no hydrants available for matching"));
    }
    parcels.par_iter_mut().try_for_each(|p| {
        p.hydrant_type = Some(nearest_hydrant(p.coords(), hydrants)?);
        Ok(())
    })
}

/// Record label versus inspected private-side material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionTable {
    pub fn get(&self, row: &str, col: &str) -> u64 {
        let r = self.row_labels.iter().position(|l| l == row);
        let c = self.col_labels.iter().position(|l| l == col);
        match (r, c) {
            (Some(r), Some(c)) => self.counts[r][c],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["record_label".to_string()];
        header.extend(self.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
    }
}

/// Cross-tabulates recorded labels against inspections over the parcels
/// present in both lists. Rows are sorted labels, columns the three inspected
/// materials.
pub fn sl_confusion_matrix(
    records: &[ServiceLineRecord],
    inspections: &[InspectionRecord],
) -> Result<ConfusionTable> {
    let mut inspected: HashMap<&str, InspectedMaterial> = HashMap::new();
    for i in inspections {
        if inspected.insert(&i.pid, i.private_material_inspected).is_some() {
            return Err(Error::DuplicateInspection(i.pid.clone()));
        }
    }
    let mut counted = BTreeSet::new();
    let mut cells: BTreeMap<&str, [u64; 3]> = BTreeMap::new();
    for r in records {
        let Some(m) = inspected.get(r.pid.as_str()) else { continue };
        if !counted.insert(r.pid.as_str()) {
            continue;
        }
        let col = InspectedMaterial::ALL.iter().position(|x| x == m).expect("known material");
        cells.entry(r.raw_label.as_str()).or_default()[col] += 1;
    }
    Ok(ConfusionTable {
        row_labels: cells.keys().map(|s| s.to_string()).collect(),
        col_labels: InspectedMaterial::ALL.iter().map(|m| m.to_string()).collect(),
        counts: cells.values().map(|c| c.to_vec()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parcel_header() -> String {
        let mut h = vec!["PID".to_string(), "Address".to_string()];
        h.extend(ParcelField::ALL.iter().skip(1).map(|f| f.display_name().to_string()));
        h.join(",")
    }

    fn clean_row(i: usize) -> String {
        let mut cells = vec![format!("41{i:08}"), format!("{} Main St", 100 + i)];
        for f in ParcelField::ALL.iter().skip(1) {
            cells.push(match f {
                ParcelField::YearBuilt => "1935".into(),
                ParcelField::HomesteadPercent => "100".into(),
                ParcelField::Latitude => "43.01".into(),
                ParcelField::Longitude => "-83.69".into(),
                _ if f.kind() == FieldKind::Numeric => "1200".into(),
                _ => "A".into(),
            });
        }
        cells.join(",")
    }

    #[test]
    fn ten_clean_rows() {
        let mut csv = parcel_header() + "\n";
        for i in 0..10 {
            csv += &(clean_row(i) + "\n");
        }
        let (parcels, report) = parse_parcels(csv.as_bytes(), &Default::default()).unwrap();
        assert_eq!(parcels.len(), 10);
        assert_eq!(report.rows_read, 10);
        assert_eq!(report.rows_rejected, 0);
        assert!(report.flags.is_empty());
        assert!(report.per_column_missing.values().all(|&c| c == 0));
        assert_eq!(report.per_column_missing.len(), 34);
        assert_eq!(parcels[3].year_built, Some(1935.0));
        assert_eq!(parcels[3].address.as_deref(), Some("103 Main St"));
    }

    #[test]
    fn year_out_of_range_is_missing_and_flagged() {
        let csv = "pid,year_built,homestead_percent\nA1,1776,50\nA2,1950,150\n";
        let (parcels, report) = parse_parcels(csv.as_bytes(), &Default::default()).unwrap();
        assert_eq!(parcels[0].year_built, None);
        assert_eq!(parcels[1].homestead_percent, None);
        assert_eq!(report.flags.len(), 2);
        assert_eq!(report.flags[0].kind, FlagKind::OutOfRange);
        assert_eq!(report.flags[0].column, "year_built");
        assert_eq!(report.per_column_missing["year_built"], 1);
    }

    #[test]
    fn unparseable_numeric_counts_missing() {
        let csv = "pid,land_value\nA1,\"$12,500\"\nA2,n/a\n";
        let (parcels, report) = parse_parcels(csv.as_bytes(), &Default::default()).unwrap();
        assert_eq!(parcels[0].land_value, Some(12500.0));
        assert_eq!(parcels[1].land_value, None);
        assert_eq!(report.per_column_missing["land_value"], 1);
        assert_eq!(report.flags[0].kind, FlagKind::Unparseable);
    }

    #[test]
    fn missing_pid_column_is_fatal() {
        let err = parse_parcels("zip,ward\n48503,1\n".as_bytes(), &Default::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "pid"));
    }

    #[test]
    fn duplicate_pids_are_listed() {
        let csv = "pid\nB\nA\nB\nA\nC\n";
        match parse_parcels(csv.as_bytes(), &Default::default()) {
            Err(Error::DuplicatePid(ids)) => assert_eq!(ids, vec!["A".to_string(), "B".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn outside_bbox_is_flagged_not_dropped() {
        let csv = "pid,latitude,longitude\nA,43.0,-83.7\nB,40.7,-74.0\n";
        let (parcels, report) = parse_parcels(csv.as_bytes(), &Default::default()).unwrap();
        assert_eq!(parcels.len(), 2);
        assert!(!parcels[0].outside_bbox);
        assert!(parcels[1].outside_bbox);
        assert_eq!(report.flags[0].kind, FlagKind::OutsideBoundingBox);
    }

    #[test]
    fn parses_and_rejects_tests() {
        let csv = "date,lead,copper,address\n2016-01-05,104.0,80,123 Main St\n2016-01-06,-1,0,1 A St\n01/07/2016,3,,9 B Ave\n";
        let (tests, report) = parse_tests(csv.as_bytes()).unwrap();
        assert_eq!(tests.len(), 2);
        assert_eq!(tests[0].lead_ppb, 104.0);
        assert_eq!(tests[0].copper_ppb, Some(80.0));
        assert_eq!(tests[1].sample_date, NaiveDate::from_ymd_opt(2016, 1, 7));
        assert_eq!(report.rows_rejected, 1);
        assert_eq!(report.rejected[0].line, 3);
        assert_eq!(report.rows_read, tests.len() + report.rows_rejected);
    }

    #[test]
    fn empty_test_file_is_empty_list() {
        let (tests, report) = parse_tests("".as_bytes()).unwrap();
        assert!(tests.is_empty());
        assert_eq!(report.rows_read, 0);
        let (tests, _) = parse_tests("date,lead,copper,address\n".as_bytes()).unwrap();
        assert!(tests.is_empty());
    }

    #[test]
    fn report_json_has_three_keys() {
        let (_, report) = parse_tests("date,lead,copper,address\nx,-2,,\n".as_bytes()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, vec!["per_column_missing", "rows_read", "rows_rejected"]);
        assert_eq!(v["rows_rejected"], 1);
    }

    #[test]
    fn sl_label_examples() {
        let s = split_sl_label("Copper/Lead");
        assert_eq!((s.private_material, s.public_material), (Material::Copper, Material::Lead));
        let s = split_sl_label("Copper/?");
        assert_eq!((s.private_material, s.public_material), (Material::Copper, Material::Unknown));
        let s = split_sl_label("");
        assert_eq!((s.private_material, s.public_material), (Material::Unknown, Material::Unknown));
        let s = split_sl_label("Copper");
        assert_eq!((s.private_material, s.public_material, s.single_token), (Material::Copper, Material::Copper, true));
        let s = split_sl_label("Unkown/Other");
        assert_eq!((s.private_material, s.public_material), (Material::Unknown, Material::Other));
        let s = split_sl_label("Brass/Lead");
        assert_eq!((s.private_material, s.unrecognized), (Material::Other, 1));
    }

    #[test]
    fn sl_label_idempotent_over_vocabulary() {
        for a in Material::ALL {
            for b in Material::ALL {
                let s = split_sl_label(&format!("{a}/{b}"));
                assert_eq!((s.private_material, s.public_material), (a, b));
                let again = split_sl_label(&format!("{}/{}", s.private_material, s.public_material));
                assert_eq!(s, again);
            }
        }
    }

    #[test]
    fn address_normalization() {
        assert_eq!(normalize_address("123 Main St."), "123 MAIN ST");
        assert_eq!(normalize_address("  123   main street "), "123 MAIN ST");
        assert_eq!(normalize_address("45 North Saginaw Avenue"), "45 N SAGINAW AVE");
    }

    fn test_at(address: &str) -> LeadTest {
        LeadTest { sample_date: None, lead_ppb: 1.0, copper_ppb: None, address: address.into(), pid: None }
    }

    #[test]
    fn matching_rules() {
        let mut p1 = ParcelRecord::new("P1");
        p1.address = Some("123 Main St.".into());
        let mut p2 = ParcelRecord::new("P2");
        p2.address = Some("9 Oak Ave".into());
        let mut p3 = ParcelRecord::new("P3");
        p3.address = Some("9 OAK AVENUE".into());
        let parcels = vec![p1, p2, p3];
        let tests = vec![
            test_at("123 MAIN ST"),
            test_at("123 main street"),
            test_at("123 Main St"),
            test_at("77 Nowhere Rd"),
            test_at("9 Oak Ave"),
        ];
        let m = match_tests_to_parcels(&tests, &parcels);
        assert_eq!(m.matched.len(), 3);
        assert!(m.matched.iter().all(|t| t.pid.as_deref() == Some("P1")));
        assert_eq!(m.discarded_unmatched, 1);
        assert_eq!(m.discarded_ambiguous, 1);
    }

    #[test]
    fn hydrant_singleton_tie_and_missing() {
        let h = |id: &str, ty: &str, lat, lon| HydrantRecord {
            hydrant_id: id.into(),
            hydrant_type: ty.into(),
            latitude: lat,
            longitude: lon,
        };
        assert_eq!(nearest_hydrant(Some((43.0, -83.7)), &[h("X", "A", 43.01, -83.71)]).unwrap(), "A");
        let pair = [h("H2", "second", 43.0, -83.69), h("H1", "first", 43.0, -83.71)];
        assert_eq!(nearest_hydrant(Some((43.0, -83.70)), &pair).unwrap(), "first");
        assert_eq!(nearest_hydrant(None, &pair).unwrap(), UNKNOWN_HYDRANT);
        assert!(nearest_hydrant(Some((43.0, -83.7)), &[]).is_err());
    }

    fn sl(pid: &str, label: &str) -> ServiceLineRecord {
        let s = split_sl_label(label);
        ServiceLineRecord {
            pid: pid.into(),
            raw_label: label.into(),
            private_material: s.private_material,
            public_material: s.public_material,
            single_token: s.single_token,
        }
    }

    fn insp(pid: &str, m: InspectedMaterial) -> InspectionRecord {
        InspectionRecord { pid: pid.into(), private_material_inspected: m }
    }

    #[test]
    fn confusion_small_cases() {
        let t = sl_confusion_matrix(&[sl("A", "Copper")], &[insp("B", InspectedMaterial::Lead)]).unwrap();
        assert_eq!(t.total(), 0);
        let t = sl_confusion_matrix(&[sl("A", "Copper")], &[insp("A", InspectedMaterial::Lead)]).unwrap();
        assert_eq!(t.total(), 1);
        assert_eq!(t.get("Copper", "Lead"), 1);
        let dup = [insp("A", InspectedMaterial::Lead), insp("A", InspectedMaterial::Copper)];
        assert!(matches!(sl_confusion_matrix(&[], &dup), Err(Error::DuplicateInspection(_))));
    }

    #[test]
    fn duplicate_inspection_file_is_error() {
        let csv = "pid,material\nA,Copper\nA,Lead\n";
        assert!(matches!(parse_inspections(csv.as_bytes()), Err(Error::DuplicateInspection(_))));
    }
}
