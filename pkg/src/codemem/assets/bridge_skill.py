from datetime import timedelta


async def agent_main(days_back=15):
    """Save recent PDF/XLSX email attachments to per-company OneDrive folders.

    Internal @agentr.dev senders are skipped entirely. When the declared
    company is the placeholder 'codeword', the real name is recovered from
    the attachment metadata.
    """
    cutoff = (workflow_now() - timedelta(days=days_back)).strftime("%Y-%m-%dT%H:%M:%SZ")
    filter_query = f"receivedDateTime >= {cutoff} and hasAttachments eq true"
    emails = await outlook__list_emails(filter=filter_query)

    uploaded = []
    skipped = 0
    for email in emails:
        if "@agentr.dev" in email["from"]:
            skipped += 1
            continue
        names = email.get("attachment_names", [])
        wanted = [n for n in names if n.lower().endswith((".pdf", ".xlsx"))]
        if not wanted:
            skipped += 1
            continue
        attachment = await outlook__get_attachment(email["id"], index=names.index(wanted[0]))
        company = attachment.get("company") or "Unknown"
        if company == "codeword":
            company = attachment.get("metadata", {}).get("real_company", company)
        path = f"Email Attachments December/{company}/{attachment['filename']}"
        await onedrive__upload_file(path=path, content=attachment["content"])
        uploaded.append(path)
    return {"emails_listed": len(emails), "skipped": skipped, "uploaded": uploaded}
