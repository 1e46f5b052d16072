/**
 * Minimal markdown renderer with strict sanitization.
 *
 * All input is HTML-escaped first; formatting is then re-introduced only
 * through a fixed set of generated tags (code, pre, strong, em, a, br, p).
 * Link hrefs are restricted to http(s), so javascript: URLs and raw HTML
 * in model output can never reach the DOM.
 */

const ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ESCAPES[ch]);
}

function safeHref(url: string): string | null {
  const trimmed = url.trim();
  if (/^https?:\/\//i.test(trimmed)) return trimmed;
  return null;
}

function renderInline(escaped: string): string {
  let out = escaped;
  // inline code first so other markers inside backticks stay literal
  out = out.replace(/`([^`\n]+)`/g, (_m, code: string) => `<code>${code}</code>`);
  out = out.replace(/\*\*([^*\n]+)\*\*/g, "<strong>$1</strong>");
  out = out.replace(/(^|[^*])\*([^*\n]+)\*/g, "$1<em>$2</em>");
  out = out.replace(/\[([^\]\n]+)\]\(([^)\n]+)\)/g, (_m, label: string, url: string) => {
    const href = safeHref(url);
    if (!href) return label; // drop unsafe links, keep the text
    return `<a href="${escapeHtml(href)}" target="_blank" rel="noopener noreferrer">${label}</a>`;
  });
  return out;
}

export function renderMarkdown(text: string): string {
  const parts = text.split(/```/);
  const html: string[] = [];
  for (let i = 0; i < parts.length; i++) {
    const escaped = escapeHtml(parts[i]);
    if (i % 2 === 1) {
      // fenced code block; first line may be a language tag
      const body = escaped.replace(/^[^\n]*\n/, "");
      html.push(`<pre><code>${body || escaped}</code></pre>`);
    } else {
      const paragraphs = escaped
        .split(/\n{2,}/)
        .filter((p) => p.trim() !== "")
        .map((p) => `<p>${renderInline(p).replace(/\n/g, "<br>")}</p>`);
      html.push(paragraphs.join(""));
    }
  }
  return html.join("");
}
