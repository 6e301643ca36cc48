/// Log points per median window.
pub const ONSET_WINDOW: usize = 5;
/// Fraction of the initial windowed median that marks the onset.
pub const ONSET_FRACTION: f64 = 0.01;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First logged iteration whose centred five-point median of the total loss
/// reaches 1% of the median of the first five logged values.
///
/// Windows are clipped at both ends of the history. Returns `None` for fewer
/// than two points or when the threshold is never reached.
pub fn detect_onset(history: &[(usize, f64)]) -> Option<usize> {
    if history.len() < 2 {
        return None;
    }
    let half = ONSET_WINDOW / 2;
    let mut first: Vec<f64> = history.iter().take(ONSET_WINDOW).map(|&(_, l)| l).collect();
    let threshold = ONSET_FRACTION * median(&mut first);
    (0..history.len()).find_map(|i| {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(history.len());
        let mut w: Vec<f64> = history[lo..hi].iter().map(|&(_, l)| l).collect();
        (median(&mut w) <= threshold).then_some(history[i].0)
    })
}
