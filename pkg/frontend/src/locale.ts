/** Instrument wording is externalized; the page fetches it at startup. */

export interface Locale {
  tlx: { title: string; scales: { name: string; low: string; high: string }[] };
  panas: { title: string; items: string[]; anchors: string[] };
  va: { title: string; valence: string; arousal: string };
  stress: { title: string; prompt: string };
  timeperc: { title: string; prompt: string };
  nback: { title: string; instructions: string };
  takeover: { title: string; instructions: string };
  submit: string;
}

export async function loadLocale(url = "./locale.en.json"): Promise<Locale> {
  const res = await fetch(url);
  if (!res.ok) throw new Error(`cannot load locale: ${res.status}`);
  return (await res.json()) as Locale;
}
