//! Weekly price/return/factor panels and the cleaning pipeline that turns
//! raw vendor data into the rectangular matrices the rest of the crate
//! consumes. Missing observations are explicit `None` cells end to end;
//! returns are never zero-filled.

use chrono::{Datelike, Duration, NaiveDate, Weekday};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::stats;

pub const DEFAULT_CURRENCY: &str = "USD";
pub const FACTOR_NAMES: [&str; 6] = ["Mkt-RF", "SMB", "HML", "RMW", "CMA", "Mom"];

/// Adjusted close prices, one column per asset. Cells are `None` where the
/// vendor had no observation.
#[derive(Debug, Clone)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    pub currency_tags: Vec<String>,
    cells: Vec<Option<f64>>,
}

impl PricePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        currency_tags: Vec<String>,
        cells: Vec<Option<f64>>,
    ) -> Result<Self> {
        if currency_tags.len() != assets.len() {
            return Err(Error::Shape(format!(
                "{} currency tags for {} assets",
                currency_tags.len(),
                assets.len()
            )));
        }
        if cells.len() != dates.len() * assets.len() {
            return Err(Error::Shape(format!(
                "{} cells for {} dates x {} assets",
                cells.len(),
                dates.len(),
                assets.len()
            )));
        }
        let p = PricePanel { dates, assets, currency_tags, cells };
        p.validate()?;
        Ok(p)
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.cells[t * self.assets.len() + i]
    }

    pub fn set(&mut self, t: usize, i: usize, v: Option<f64>) {
        let n = self.assets.len();
        self.cells[t * n + i] = v;
    }

    fn validate(&self) -> Result<()> {
        check_strictly_increasing(&self.dates)?;
        for t in 0..self.n_dates() {
            for i in 0..self.n_assets() {
                if let Some(p) = self.get(t, i) {
                    if !(p > 0.0) {
                        return Err(Error::Domain(format!(
                            "non-positive price {p} for {} on {}",
                            self.assets[i], self.dates[t]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Simple and log weekly returns plus the aligned risk-free series. `rf`
/// stays empty until `align_calendar` attaches it from a factor file.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    simple: Vec<Option<f64>>,
    log: Vec<Option<f64>>,
    pub rf: Vec<f64>,
}

impl ReturnPanel {
    /// Build from dense simple returns; log returns derived as ln(1+R).
    pub fn from_dense(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        simple: Mat,
        rf: Vec<f64>,
    ) -> Result<Self> {
        if simple.rows() != dates.len() || simple.cols() != assets.len() {
            return Err(Error::Shape(format!(
                "returns {}x{} for {} dates x {} assets",
                simple.rows(),
                simple.cols(),
                dates.len(),
                assets.len()
            )));
        }
        if !rf.is_empty() && rf.len() != dates.len() {
            return Err(Error::Shape(format!("{} rf rows for {} dates", rf.len(), dates.len())));
        }
        check_strictly_increasing(&dates)?;
        let mut sp = Vec::with_capacity(simple.rows() * simple.cols());
        let mut lg = Vec::with_capacity(sp.capacity());
        for t in 0..simple.rows() {
            for i in 0..simple.cols() {
                let r = simple[(t, i)];
                if r <= -1.0 {
                    return Err(Error::Domain(format!(
                        "return {r} <= -1 for {} on {}",
                        assets[i], dates[t]
                    )));
                }
                sp.push(Some(r));
                lg.push(Some((1.0 + r).ln()));
            }
        }
        Ok(ReturnPanel { dates, assets, simple: sp, log: lg, rf })
    }

    pub fn from_cells(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        simple: Vec<Option<f64>>,
        rf: Vec<f64>,
    ) -> Result<Self> {
        if simple.len() != dates.len() * assets.len() {
            return Err(Error::Shape("cell count mismatch".into()));
        }
        check_strictly_increasing(&dates)?;
        let log = simple
            .iter()
            .map(|c| c.map(|r| (1.0 + r).ln()))
            .collect();
        Ok(ReturnPanel { dates, assets, simple, log, rf })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn simple_at(&self, t: usize, i: usize) -> Option<f64> {
        self.simple[t * self.assets.len() + i]
    }

    pub fn log_at(&self, t: usize, i: usize) -> Option<f64> {
        self.log[t * self.assets.len() + i]
    }

    pub fn is_rectangular(&self) -> bool {
        self.simple.iter().all(|c| c.is_some())
    }

    /// Dense simple-return matrix; errors if any cell is still missing.
    pub fn dense_simple(&self) -> Result<Mat> {
        self.dense(&self.simple)
    }

    pub fn dense_log(&self) -> Result<Mat> {
        self.dense(&self.log)
    }

    fn dense(&self, cells: &[Option<f64>]) -> Result<Mat> {
        let (t, n) = (self.n_dates(), self.n_assets());
        let mut data = Vec::with_capacity(t * n);
        for (k, c) in cells.iter().enumerate() {
            match c {
                Some(v) => data.push(*v),
                None => {
                    return Err(Error::Data(format!(
                        "missing cell for {} on {}; run clean_panel first",
                        self.assets[k % n],
                        self.dates[k / n]
                    )))
                }
            }
        }
        Ok(Mat::from_vec(t, n, data))
    }
}

/// Weekly factor panel, columns fixed to [Mkt-RF, SMB, HML, RMW, CMA, Mom].
/// `rf` carries the risk-free column when the source file provided one.
#[derive(Debug, Clone)]
pub struct FactorPanel {
    pub dates: Vec<NaiveDate>,
    pub factors: Mat,
    pub rf: Option<Vec<f64>>,
}

impl FactorPanel {
    pub fn new(dates: Vec<NaiveDate>, factors: Mat, rf: Option<Vec<f64>>) -> Result<Self> {
        if factors.rows() != dates.len() {
            return Err(Error::Shape(format!(
                "{} factor rows for {} dates",
                factors.rows(),
                dates.len()
            )));
        }
        if factors.cols() != FACTOR_NAMES.len() {
            return Err(Error::Shape(format!(
                "{} factor columns, expected {}",
                factors.cols(),
                FACTOR_NAMES.len()
            )));
        }
        if let Some(r) = &rf {
            if r.len() != dates.len() {
                return Err(Error::Shape(format!("{} rf rows for {} dates", r.len(), dates.len())));
            }
        }
        check_strictly_increasing(&dates)?;
        Ok(FactorPanel { dates, factors, rf })
    }
}

fn check_strictly_increasing(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Data(format!("dates not strictly increasing at {}", w[1])));
        }
    }
    Ok(())
}

/// Date-indexed FX rate series, quoted as units of foreign currency per
/// unit of base (so base value = foreign price / rate).
#[derive(Debug, Clone)]
pub struct FxSeries {
    pub dates: Vec<NaiveDate>,
    pub rates: Vec<f64>,
}

impl FxSeries {
    pub fn rate_on(&self, d: NaiveDate) -> Option<f64> {
        self.dates.iter().position(|&x| x == d).map(|i| self.rates[i])
    }
}

/// Divide each foreign-currency column by the FX rate on its date; base
/// columns pass through. All tags become `base` afterwards.
pub fn convert_to_base(prices: &PricePanel, fx: &FxSeries, base: &str) -> Result<PricePanel> {
    for r in &fx.rates {
        if !(*r > 0.0) {
            return Err(Error::Domain(format!("non-positive fx rate {r}")));
        }
    }
    let mut out = prices.clone();
    for (i, tag) in prices.currency_tags.iter().enumerate() {
        if tag == base {
            continue;
        }
        for t in 0..prices.n_dates() {
            if let Some(p) = prices.get(t, i) {
                let rate = fx.rate_on(prices.dates[t]).ok_or_else(|| {
                    Error::Alignment(format!(
                        "no fx rate for {} needed by {} ({tag})",
                        prices.dates[t], prices.assets[i]
                    ))
                })?;
                out.set(t, i, Some(p / rate));
            }
        }
    }
    out.currency_tags = vec![base.to_string(); prices.n_assets()];
    Ok(out)
}

/// Calendar week-end on or after `d` for the given anchor weekday.
pub fn week_end(d: NaiveDate, anchor: Weekday) -> NaiveDate {
    let ahead = (anchor.num_days_from_monday() + 7 - d.weekday().num_days_from_monday()) % 7;
    d + Duration::days(ahead as i64)
}

/// Collapse daily observations to one row per calendar week ending on the
/// anchor weekday, keeping the last available observation per asset.
pub fn resample_weekly(daily: &PricePanel, anchor: Weekday) -> PricePanel {
    let mut weeks: Vec<NaiveDate> = Vec::new();
    for &d in &daily.dates {
        let w = week_end(d, anchor);
        if weeks.last() != Some(&w) {
            weeks.push(w);
        }
    }
    let n = daily.n_assets();
    let mut cells: Vec<Option<f64>> = vec![None; weeks.len() * n];
    let mut wk = 0usize;
    for (t, &d) in daily.dates.iter().enumerate() {
        let w = week_end(d, anchor);
        while weeks[wk] != w {
            wk += 1;
        }
        for i in 0..n {
            if let Some(p) = daily.get(t, i) {
                cells[wk * n + i] = Some(p); // later observation overwrites
            }
        }
    }
    PricePanel {
        dates: weeks,
        assets: daily.assets.clone(),
        currency_tags: daily.currency_tags.clone(),
        cells,
    }
}

/// Fill interior gaps of at most `limit` consecutive missing prices by
/// carrying the last observation forward; leading gaps of at most `limit`
/// are back-filled from the first observation. Longer runs stay missing.
pub fn fill_price_gaps(prices: &PricePanel, limit: usize) -> PricePanel {
    let mut out = prices.clone();
    let t_max = prices.n_dates();
    for i in 0..prices.n_assets() {
        let mut t = 0usize;
        while t < t_max {
            if prices.get(t, i).is_some() {
                t += 1;
                continue;
            }
            let start = t;
            while t < t_max && prices.get(t, i).is_none() {
                t += 1;
            }
            let run = t - start;
            if run > limit {
                continue;
            }
            if start > 0 {
                let v = prices.get(start - 1, i);
                for k in start..t {
                    out.set(k, i, v);
                }
            } else if t < t_max {
                let v = prices.get(t, i);
                for k in start..t {
                    out.set(k, i, v);
                }
            }
        }
    }
    out
}

/// Weekly simple and log returns from a price panel. The first row is
/// consumed; cells are present only where both neighbouring prices are.
pub fn compute_returns(prices: &PricePanel) -> Result<ReturnPanel> {
    prices.validate()?;
    let (t_max, n) = (prices.n_dates(), prices.n_assets());
    if t_max < 2 {
        return Err(Error::Data(format!("need at least 2 price rows, got {t_max}")));
    }
    let dates = prices.dates[1..].to_vec();
    let mut simple: Vec<Option<f64>> = Vec::with_capacity((t_max - 1) * n);
    for t in 1..t_max {
        for i in 0..n {
            simple.push(match (prices.get(t - 1, i), prices.get(t, i)) {
                (Some(a), Some(b)) => Some(b / a - 1.0),
                _ => None,
            });
        }
    }
    ReturnPanel::from_cells(dates, prices.assets.clone(), simple, Vec::new())
}

/// Drop assets with pre-clean coverage below `min_coverage`, then drop the
/// remaining weeks that still have any missing cell. Output is rectangular.
pub fn clean_panel(returns: &ReturnPanel, min_coverage: f64) -> Result<ReturnPanel> {
    if !(min_coverage > 0.0 && min_coverage <= 1.0) {
        return Err(Error::Config(format!("min_coverage {min_coverage} outside (0,1]")));
    }
    let (t_max, n) = (returns.n_dates(), returns.n_assets());
    let keep_assets: Vec<usize> = (0..n)
        .filter(|&i| {
            let present = (0..t_max).filter(|&t| returns.simple_at(t, i).is_some()).count();
            (present as f64 / t_max as f64) >= min_coverage
        })
        .collect();
    if keep_assets.is_empty() {
        return Err(Error::Data(format!(
            "no asset reaches coverage {min_coverage}; universe is empty"
        )));
    }
    let keep_rows: Vec<usize> = (0..t_max)
        .filter(|&t| keep_assets.iter().all(|&i| returns.simple_at(t, i).is_some()))
        .collect();
    if keep_rows.is_empty() {
        return Err(Error::Data("no complete week after cleaning".into()));
    }
    let dates: Vec<NaiveDate> = keep_rows.iter().map(|&t| returns.dates[t]).collect();
    let assets: Vec<String> = keep_assets.iter().map(|&i| returns.assets[i].clone()).collect();
    let mut cells = Vec::with_capacity(keep_rows.len() * keep_assets.len());
    for &t in &keep_rows {
        for &i in &keep_assets {
            cells.push(returns.simple_at(t, i));
        }
    }
    let rf = if returns.rf.is_empty() {
        Vec::new()
    } else {
        keep_rows.iter().map(|&t| returns.rf[t]).collect()
    };
    ReturnPanel::from_cells(dates, assets, cells, rf)
}

/// Restrict returns and factors to their common dates, in order, and move
/// the factor file's risk-free column onto the return panel.
pub fn align_calendar(
    returns: &ReturnPanel,
    factors: &FactorPanel,
) -> Result<(ReturnPanel, FactorPanel)> {
    let fdates: std::collections::BTreeSet<NaiveDate> = factors.dates.iter().copied().collect();
    let keep_r: Vec<usize> = (0..returns.n_dates())
        .filter(|&t| fdates.contains(&returns.dates[t]))
        .collect();
    if keep_r.is_empty() {
        return Err(Error::Alignment("return and factor calendars have no common date".into()));
    }
    let common: std::collections::BTreeSet<NaiveDate> =
        keep_r.iter().map(|&t| returns.dates[t]).collect();
    let keep_f: Vec<usize> = (0..factors.dates.len())
        .filter(|&t| common.contains(&factors.dates[t]))
        .collect();

    let n = returns.n_assets();
    let mut cells = Vec::with_capacity(keep_r.len() * n);
    for &t in &keep_r {
        for i in 0..n {
            cells.push(returns.simple_at(t, i));
        }
    }
    let rf: Vec<f64> = match &factors.rf {
        Some(r) => keep_f.iter().map(|&t| r[t]).collect(),
        None => {
            if returns.rf.is_empty() {
                Vec::new()
            } else {
                keep_r.iter().map(|&t| returns.rf[t]).collect()
            }
        }
    };
    let out_returns = ReturnPanel::from_cells(
        keep_r.iter().map(|&t| returns.dates[t]).collect(),
        returns.assets.clone(),
        cells,
        rf,
    )?;
    let fmat = Mat::from_fn(keep_f.len(), FACTOR_NAMES.len(), |r, c| {
        factors.factors[(keep_f[r], c)]
    });
    let out_factors = FactorPanel::new(
        keep_f.iter().map(|&t| factors.dates[t]).collect(),
        fmat,
        None,
    )?;
    Ok((out_returns, out_factors))
}

/// Jarque-Bera normality test: statistic and rejection flag at the 5%
/// level (chi-squared(2) critical value 5.99).
pub fn jarque_bera_test(series: &[f64]) -> Result<(f64, bool)> {
    if series.len() < 8 {
        return Err(Error::Data(format!(
            "Jarque-Bera needs at least 8 observations, got {}",
            series.len()
        )));
    }
    if series.iter().all(|&v| v == series[0]) || stats::pop_var(series) <= 0.0 {
        return Err(Error::Domain("Jarque-Bera on a zero-variance series".into()));
    }
    let jb = stats::jarque_bera(series);
    Ok((jb, jb > 5.99))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn panel(dates: &[&str], assets: &[&str], cells: Vec<Option<f64>>) -> PricePanel {
        PricePanel::new(
            dates.iter().map(|s| d(s)).collect(),
            assets.iter().map(|s| s.to_string()).collect(),
            vec![DEFAULT_CURRENCY.to_string(); assets.len()],
            cells,
        )
        .unwrap()
    }

    #[test]
    fn convert_divides_foreign_columns_only() {
        let mut p = panel(
            &["2024-01-05", "2024-01-12"],
            &["FOREIGN", "BASE"],
            vec![Some(8300.0), Some(50.0), Some(8400.0), Some(51.0)],
        );
        p.currency_tags = vec!["INR".into(), "USD".into()];
        let fx = FxSeries {
            dates: vec![d("2024-01-05"), d("2024-01-12")],
            rates: vec![83.0, 84.0],
        };
        let out = convert_to_base(&p, &fx, "USD").unwrap();
        assert_abs_diff_eq!(out.get(0, 0).unwrap(), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(1, 0).unwrap(), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(0, 1).unwrap(), 50.0);
        assert_abs_diff_eq!(out.get(1, 1).unwrap(), 51.0);
        assert!(out.currency_tags.iter().all(|t| t == "USD"));
    }

    #[test]
    fn convert_missing_fx_names_the_week() {
        let mut p = panel(&["2024-01-05", "2024-01-12"], &["A"], vec![Some(1.0), Some(2.0)]);
        p.currency_tags = vec!["INR".into()];
        let fx = FxSeries { dates: vec![d("2024-01-05")], rates: vec![83.0] };
        let err = convert_to_base(&p, &fx, "USD").unwrap_err();
        assert!(err.to_string().contains("2024-01-12"), "{err}");
    }

    #[test]
    fn resample_takes_last_observation_of_week() {
        // Mon 1st, Tue 2nd, Thu 4th of Jan 2024; Friday anchor -> Jan 5.
        let p = panel(
            &["2024-01-01", "2024-01-02", "2024-01-04"],
            &["A"],
            vec![Some(1.0), Some(2.0), Some(4.0)],
        );
        let w = resample_weekly(&p, Weekday::Fri);
        assert_eq!(w.dates, vec![d("2024-01-05")]);
        assert_eq!(w.get(0, 0), Some(4.0));
    }

    #[test]
    fn resample_two_weeks_hand_built_calendar() {
        // Week 1: Mon Jan 1 - Fri Jan 5. Week 2: Mon Jan 8 - Fri Jan 12.
        let p = panel(
            &["2024-01-01", "2024-01-03", "2024-01-08", "2024-01-12"],
            &["A", "B"],
            vec![
                Some(1.0), Some(10.0),
                Some(2.0), None,
                Some(3.0), Some(30.0),
                Some(4.0), Some(40.0),
            ],
        );
        let w = resample_weekly(&p, Weekday::Fri);
        assert_eq!(w.dates, vec![d("2024-01-05"), d("2024-01-12")]);
        assert_eq!(w.get(0, 0), Some(2.0));
        assert_eq!(w.get(0, 1), Some(10.0));
        assert_eq!(w.get(1, 0), Some(4.0));
        assert_eq!(w.get(1, 1), Some(40.0));
    }

    #[test]
    fn resample_keeps_missing_week_missing() {
        let p = panel(
            &["2024-01-01", "2024-01-08"],
            &["A", "B"],
            vec![Some(1.0), None, Some(2.0), Some(20.0)],
        );
        let w = resample_weekly(&p, Weekday::Fri);
        assert_eq!(w.get(0, 1), None);
        assert_eq!(w.get(1, 1), Some(20.0));
    }

    #[test]
    fn resample_saturday_anchor() {
        let p = panel(&["2024-01-05", "2024-01-06"], &["A"], vec![Some(1.0), Some(2.0)]);
        // Friday Jan 5 belongs to the week ending Saturday Jan 6.
        let w = resample_weekly(&p, Weekday::Sat);
        assert_eq!(w.dates, vec![d("2024-01-06")]);
        assert_eq!(w.get(0, 0), Some(2.0));
    }

    #[test]
    fn fill_gaps_respects_run_limit() {
        let p = panel(
            &[
                "2024-01-05", "2024-01-12", "2024-01-19", "2024-01-26", "2024-02-02",
                "2024-02-09", "2024-02-16", "2024-02-23", "2024-03-01", "2024-03-08",
            ],
            &["A"],
            vec![
                Some(1.0), None, None, None, Some(5.0),
                None, None, None, None, Some(10.0),
            ],
        );
        let f = fill_price_gaps(&p, 3);
        // Run of 3 forward-filled from 1.0; run of 4 untouched.
        assert_eq!(f.get(1, 0), Some(1.0));
        assert_eq!(f.get(2, 0), Some(1.0));
        assert_eq!(f.get(3, 0), Some(1.0));
        assert_eq!(f.get(5, 0), None);
        assert_eq!(f.get(8, 0), None);
    }

    #[test]
    fn fill_gaps_backfills_leading_run() {
        let p = panel(
            &["2024-01-05", "2024-01-12", "2024-01-19"],
            &["A"],
            vec![None, None, Some(3.0)],
        );
        let f = fill_price_gaps(&p, 3);
        assert_eq!(f.get(0, 0), Some(3.0));
        assert_eq!(f.get(1, 0), Some(3.0));
    }

    #[test]
    fn returns_basic_arithmetic() {
        let p = panel(&["2024-01-05", "2024-01-12"], &["A"], vec![Some(100.0), Some(110.0)]);
        let r = compute_returns(&p).unwrap();
        assert_eq!(r.dates, vec![d("2024-01-12")]);
        assert_abs_diff_eq!(r.simple_at(0, 0).unwrap(), 0.10, epsilon = 1e-12);
        assert_abs_diff_eq!(r.log_at(0, 0).unwrap(), 1.1f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn returns_flat_price_is_zero() {
        let p = panel(&["2024-01-05", "2024-01-12"], &["A"], vec![Some(100.0), Some(100.0)]);
        let r = compute_returns(&p).unwrap();
        assert_eq!(r.simple_at(0, 0), Some(0.0));
        assert_eq!(r.log_at(0, 0), Some(0.0));
    }

    #[test]
    fn returns_reject_nonpositive_price_naming_cell() {
        let p = PricePanel {
            dates: vec![d("2024-01-05"), d("2024-01-12")],
            assets: vec!["BAD".into()],
            currency_tags: vec!["USD".into()],
            cells: vec![Some(100.0), Some(-3.0)],
        };
        let err = compute_returns(&p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("BAD") && msg.contains("2024-01-12"), "{msg}");
    }

    #[test]
    fn log_simple_consistency_property() {
        let mut rng = crate::rng::stream(9, "panel-test");
        let dates: Vec<&str> = vec![
            "2024-01-05", "2024-01-12", "2024-01-19", "2024-01-26", "2024-02-02",
        ];
        let cells: Vec<Option<f64>> =
            (0..15).map(|_| Some(50.0 * (1.0 + rng.random_range(-0.5..2.0)))).collect();
        let p = panel(&dates, &["A", "B", "C"], cells);
        let r = compute_returns(&p).unwrap();
        for t in 0..r.n_dates() {
            for i in 0..r.n_assets() {
                let s = r.simple_at(t, i).unwrap();
                let l = r.log_at(t, i).unwrap();
                assert_abs_diff_eq!(l.exp() - 1.0, s, epsilon = 1e-12);
            }
        }
    }

    fn ret_panel(cells: Vec<Option<f64>>, n_assets: usize) -> ReturnPanel {
        let t = cells.len() / n_assets;
        let base = d("2024-01-05");
        let dates: Vec<NaiveDate> = (0..t).map(|k| base + Duration::weeks(k as i64)).collect();
        let assets: Vec<String> = (0..n_assets).map(|i| format!("A{i}")).collect();
        ReturnPanel::from_cells(dates, assets, cells, Vec::new()).unwrap()
    }

    #[test]
    fn clean_drops_low_coverage_asset() {
        // Asset 1 covers 8/10 = 80% < 90%.
        let mut cells = Vec::new();
        for t in 0..10 {
            cells.push(Some(0.01));
            cells.push(if t < 8 { Some(0.02) } else { None });
        }
        let r = ret_panel(cells, 2);
        let c = clean_panel(&r, 0.90).unwrap();
        assert_eq!(c.assets, vec!["A0"]);
        assert_eq!(c.n_dates(), 10);
        assert!(c.is_rectangular());
    }

    #[test]
    fn clean_drops_incomplete_weeks_not_cells() {
        // Both assets above coverage; week 3 missing for asset 1 only.
        let mut cells = Vec::new();
        for t in 0..12 {
            cells.push(Some(0.01 * t as f64));
            cells.push(if t == 3 { None } else { Some(0.02) });
        }
        let r = ret_panel(cells, 2);
        let c = clean_panel(&r, 0.90).unwrap();
        assert_eq!(c.n_assets(), 2);
        assert_eq!(c.n_dates(), 11);
        // Week 3's value for asset 0 must be gone, not imputed.
        for t in 0..c.n_dates() {
            assert!(c.simple_at(t, 0) != Some(0.03));
        }
        assert!(c.is_rectangular());
    }

    #[test]
    fn clean_dense_panel_unchanged() {
        let cells: Vec<Option<f64>> = (0..20).map(|k| Some(k as f64 * 1e-3)).collect();
        let r = ret_panel(cells, 2);
        let c = clean_panel(&r, 0.90).unwrap();
        assert_eq!(c.n_dates(), r.n_dates());
        assert_eq!(c.n_assets(), r.n_assets());
        for t in 0..10 {
            for i in 0..2 {
                assert_eq!(c.simple_at(t, i), r.simple_at(t, i));
            }
        }
    }

    #[test]
    fn clean_rejects_empty_universe() {
        let cells = vec![None, Some(0.01), None, Some(0.02), None, Some(0.03), None, None];
        let r = ret_panel(cells, 2);
        assert!(clean_panel(&r, 0.90).is_err());
    }

    #[test]
    fn align_restricts_to_intersection() {
        let base = d("2024-01-05");
        let rdates: Vec<NaiveDate> = (0..10).map(|k| base + Duration::weeks(k)).collect();
        let fdates: Vec<NaiveDate> = (4..15).map(|k| base + Duration::weeks(k)).collect();
        let r = ReturnPanel::from_cells(
            rdates.clone(),
            vec!["A".into()],
            (0..10).map(|k| Some(k as f64 * 0.01)).collect(),
            Vec::new(),
        )
        .unwrap();
        let f = FactorPanel::new(
            fdates.clone(),
            Mat::from_fn(11, 6, |r, c| (r * 6 + c) as f64 * 1e-4),
            Some((0..11).map(|k| k as f64 * 1e-5).collect()),
        )
        .unwrap();
        let (ra, fa) = align_calendar(&r, &f).unwrap();
        assert_eq!(ra.dates, rdates[4..10].to_vec());
        assert_eq!(fa.dates, rdates[4..10].to_vec());
        // rf moved across from the factor file: factor rows 0..6 of fdates.
        assert_eq!(ra.rf.len(), 6);
        assert_abs_diff_eq!(ra.rf[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ra.rf[5], 5e-5, epsilon = 1e-15);
        assert_abs_diff_eq!(fa.factors[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn align_identical_calendars_unchanged() {
        let base = d("2024-01-05");
        let dates: Vec<NaiveDate> = (0..5).map(|k| base + Duration::weeks(k)).collect();
        let r = ReturnPanel::from_cells(
            dates.clone(),
            vec!["A".into()],
            (0..5).map(|k| Some(k as f64)).collect(),
            Vec::new(),
        )
        .unwrap();
        let f = FactorPanel::new(dates.clone(), Mat::zeros(5, 6), None).unwrap();
        let (ra, fa) = align_calendar(&r, &f).unwrap();
        assert_eq!(ra.dates, dates);
        assert_eq!(fa.dates, dates);
    }

    #[test]
    fn align_disjoint_calendars_error() {
        let base = d("2024-01-05");
        let r = ReturnPanel::from_cells(
            vec![base],
            vec!["A".into()],
            vec![Some(0.0)],
            Vec::new(),
        )
        .unwrap();
        let f = FactorPanel::new(vec![base + Duration::weeks(1)], Mat::zeros(1, 6), None).unwrap();
        assert!(align_calendar(&r, &f).is_err());
    }

    #[test]
    fn jb_two_point_series_closed_form() {
        // Alternating +/-c: skew 0, raw kurtosis 1 -> JB = n/6.
        let x: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 0.02 } else { -0.02 }).collect();
        let (jb, reject) = jarque_bera_test(&x).unwrap();
        assert_abs_diff_eq!(jb, 40.0 / 6.0, epsilon = 1e-10);
        assert!(reject); // 6.67 > 5.99
    }

    #[test]
    fn jb_zero_variance_errors() {
        let x = vec![0.01; 20];
        assert!(jarque_bera_test(&x).is_err());
    }

    #[test]
    fn jb_normal_rejection_rate_near_nominal() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rejections = 0usize;
        for seed in 0..1000u64 {
            let mut rng = crate::rng::substream(seed, "jb-normal", seed);
            let x: Vec<f64> =
                (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (_, reject) = jarque_bera_test(&x).unwrap();
            if reject {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 1000.0;
        assert!((0.03..=0.07).contains(&rate), "rejection rate {rate}");
    }

    #[test]
    fn jb_heavy_tails_rejected() {
        use rand_distr::Distribution;
        let t3 = rand_distr::StudentT::new(3.0).unwrap();
        let mut rejections = 0usize;
        for seed in 0..100u64 {
            let mut rng = crate::rng::substream(seed, "jb-t3", seed);
            let x: Vec<f64> = (0..500).map(|_| t3.sample(&mut rng)).collect();
            let (_, reject) = jarque_bera_test(&x).unwrap();
            if reject {
                rejections += 1;
            }
        }
        assert!(rejections as f64 / 100.0 > 0.9);
    }

    #[test]
    fn monotone_dates_enforced() {
        let dates = vec![d("2024-01-12"), d("2024-01-05")];
        assert!(PricePanel::new(
            dates,
            vec!["A".into()],
            vec!["USD".into()],
            vec![Some(1.0), Some(2.0)]
        )
        .is_err());
    }
}
