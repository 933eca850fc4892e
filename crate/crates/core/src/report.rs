//! Aligned-column text tables for report files.

/// Render rows under headers with space-padded columns.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(widths.len()) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_row = |cells: &[&str]| -> String {
        let line = cells
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<width$}", width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ");
        format!("{}\n", line.trim_end())
    };
    let mut out = render_row(headers);
    let separators: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&render_row(
        &separators.iter().map(String::as_str).collect::<Vec<_>>(),
    ));
    for row in rows {
        out.push_str(&render_row(
            &row.iter().map(String::as_str).collect::<Vec<_>>(),
        ));
    }
    out
}
