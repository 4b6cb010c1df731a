//! Little-endian primitive readers/writers for the binary file formats.

use std::io::{self, Read, Write};

pub(crate) trait WriteLe: Write {
    fn put_u8(&mut self, v: u8) -> io::Result<()> {
        self.write_all(&[v])
    }
    fn put_i8(&mut self, v: i8) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_u32(&mut self, v: u32) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_i32(&mut self, v: i32) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_u64(&mut self, v: u64) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_f32(&mut self, v: f32) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_f64(&mut self, v: f64) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
}

impl<W: Write + ?Sized> WriteLe for W {}

pub(crate) trait ReadLe: Read {
    fn get_array<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.read_exact(&mut b)?;
        Ok(b)
    }
    fn get_u8(&mut self) -> io::Result<u8> {
        Ok(self.get_array::<1>()?[0])
    }
    fn get_i8(&mut self) -> io::Result<i8> {
        Ok(i8::from_le_bytes(self.get_array()?))
    }
    fn get_u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.get_array()?))
    }
    fn get_i32(&mut self) -> io::Result<i32> {
        Ok(i32::from_le_bytes(self.get_array()?))
    }
    fn get_u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.get_array()?))
    }
    fn get_f32(&mut self) -> io::Result<f32> {
        Ok(f32::from_le_bytes(self.get_array()?))
    }
    fn get_f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.get_array()?))
    }
}

impl<R: Read + ?Sized> ReadLe for R {}
