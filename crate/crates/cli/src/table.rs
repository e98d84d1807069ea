//! CSV tables with LF line endings.

/// Round-trip float formatting, `inf` and `-inf` for infinities.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row<const W: usize>(&mut self, cells: [String; W]) {
        self.writer.write_record(&cells).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("cells are UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_comma_separated_with_lf() {
        let mut t = Table::new(&["a", "b"]);
        t.row([num(0.1), num(f64::INFINITY)]);
        t.row([num(1.0), "x".to_string()]);
        assert_eq!(t.finish(), "a,b\n0.1,inf\n1.0,x\n");
    }

    #[test]
    #[should_panic]
    fn ragged_rows_are_rejected() {
        let mut t = Table::new(&["a", "b"]);
        t.row([num(0.1)]);
    }
}
