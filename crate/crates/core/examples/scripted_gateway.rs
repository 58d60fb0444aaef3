//! Deterministic model calls: a scripted backend answers by tag, message
//! content and call order, and every call lands in the audit log.

use triage_forge::gateway::{
    ChatMessage, ChatRequest, Gateway, ScriptEntry, ScriptedBackend, LATEST_USER_PLACEHOLDER,
};

fn main() {
    let backend = ScriptedBackend::new(vec![
        ScriptEntry::for_tag("greeter", "Hello again!").at_turn(1),
        ScriptEntry::for_tag("greeter", "Hello!"),
        ScriptEntry::for_tag("echo", format!("you said: {LATEST_USER_PLACEHOLDER}")),
        ScriptEntry::for_tag("triage", "urgent").containing("chest pain"),
        ScriptEntry::for_tag("triage", "self care"),
    ]);
    let gw = Gateway::new(backend);

    let ask = |tag: &str, text: &str| {
        let req = ChatRequest::new(tag, vec![ChatMessage::system("be brief"), ChatMessage::user(text)]);
        match gw.complete_chat(&req) {
            Ok(reply) => println!("{tag:>8} | {text:<28} -> {reply}"),
            Err(e) => println!("{tag:>8} | {text:<28} -> error: {e}"),
        }
    };
    ask("greeter", "hi");
    ask("greeter", "hi");
    ask("echo", "my knee hurts");
    ask("triage", "crushing chest pain");
    ask("triage", "mild sunburn");
    ask("unknown", "anything");

    println!("\naudit log:");
    for r in gw.audit_log().snapshot() {
        println!("  #{} {} {:?} after {} attempt(s)", r.seq, r.tag, r.outcome, r.attempts);
    }
}
